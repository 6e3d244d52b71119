//! Run configuration read from JSON.

use anyhow::{bail, ensure, Context};
use probe_core::blowup::Thresholds;
use probe_core::geometry::make_scene;
use probe_core::indicator::GridSpec;
use probe_core::reflected::BallGrid;
use probe_core::{BoundaryCondition, Scene, SceneDesc, Schedule};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Environment variable that overrides the output directory.
pub const OUTPUT_ENV: &str = "PROBE_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Forward,
    Needle,
    Indicate,
    Profile,
    Reconstruct,
    Reflect,
    Conduct,
    Poincare,
}

/// Scene given inline or as a path relative to the config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Path(PathBuf),
    Inline(SceneDesc),
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub spacing: f64,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub window: Option<([f64; 2], [f64; 2])>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub scene: SceneSource,
    /// Overrides the scene wavenumber.
    #[serde(default)]
    pub k: Option<f64>,
    /// Overrides the scene obstacle condition.
    #[serde(default)]
    pub bc: Option<BoundaryCondition>,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Trace modes of the DtN maps; defaults to the largest needle order.
    #[serde(default)]
    pub n_modes: Option<usize>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Needles as vertex lists from the outer boundary to the tip.
    #[serde(default)]
    pub needles: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub ball_grid: Option<BallGrid>,
    #[serde(default = "default_n_random")]
    pub n_random: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_h() -> f64 {
    0.02
}

fn default_n_random() -> usize {
    10
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(RunConfig, Scene)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let scene = cfg.scene(base)?;
        cfg.validate()?;
        Ok((cfg, scene))
    }

    fn scene(&self, base: &Path) -> anyhow::Result<Scene> {
        let mut desc = match &self.scene {
            SceneSource::Inline(d) => d.clone(),
            SceneSource::Path(p) => {
                let p = base.join(p);
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading scene {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing scene {}", p.display()))?
            }
        };
        if let Some(k) = self.k {
            desc.k = k;
        }
        if let Some(bc) = &self.bc {
            desc.bc = bc.clone();
        }
        Ok(make_scene(&desc)?)
    }

    fn validate(&self) -> anyhow::Result<()> {
        ensure!(self.h > 0.0, "h must be positive");
        ensure!(self.n_random > 0, "n_random must be positive");
        ensure!(self.n_modes != Some(0), "n_modes must be positive");
        ensure!(self.workers != Some(0), "workers must be positive");
        self.schedule.validate()?;
        ensure!(self.thresholds.burn_in > 0 && self.thresholds.ratio > 0.0, "thresholds must be positive");
        if let Some(g) = &self.grid {
            ensure!(g.spacing > 0.0, "grid spacing must be positive");
            ensure!(g.margin.is_none_or(|m| m > 0.0), "grid margin must be positive");
        }
        if let Some(b) = &self.ball_grid {
            ensure!(b.spacing > 0.0 && b.radius > 0.0, "ball grid spacing and radius must be positive");
        }
        if let Some(t) = &self.t_grid {
            ensure!(!t.is_empty() && t.iter().all(|v| *v > 0.0 && *v < 1.0), "t_grid values must lie in ]0,1[");
        }
        Ok(())
    }

    /// Command from the config, checked against the one given on the command line.
    pub fn resolve_command(&self, cli: Command) -> anyhow::Result<Command> {
        match self.command {
            Some(c) if c != cli => bail!("config is for command {c:?}, invoked as {cli:?}"),
            _ => Ok(cli),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes.unwrap_or_else(|| self.schedule.order(self.schedule.n_max))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = self.grid.unwrap_or(GridConfig { spacing: 0.05, margin: None, window: None });
        GridSpec { spacing: g.spacing, margin: g.margin.unwrap_or(g.spacing), window: g.window }
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.t_grid.clone().unwrap_or_else(|| (1..20).map(|i| i as f64 * 0.05).collect())
    }

    pub fn ball_grid(&self) -> BallGrid {
        self.ball_grid.unwrap_or(BallGrid { spacing: 0.05, radius: 0.05 })
    }
}
