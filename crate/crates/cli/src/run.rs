//! Subcommand implementations.

use crate::config::{Command, RunConfig};
use crate::svg;
use anyhow::{bail, Context};
use num_complex::Complex64;
use probe_core::conductivity::{conductivity_classify, conductivity_indicator, dtn_gamma_pair, trace_sign};
use probe_core::fem::{check_admissibility, energy_identity};
use probe_core::geometry::{classify_tip, impact_parameter, pt};
use probe_core::indicator::{indicator_profile, indicator_sequence, reconstruct, Pairing, ReconstructOptions};
use probe_core::poincare::{poincare_constants, small_volume_condition, smallness_check, BasicInequalityContext, SubsetSpec};
use probe_core::reflected::{blowup_set_estimate, polyline_csv, reflected_run};
use probe_core::{BoundaryCondition, FitContext, ForwardModel, IndicatorField, Needle, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Output directory that records every file it writes.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String, usize)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> anyhow::Result<Artifacts> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, content: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        let hash = Sha256::digest(content.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        self.files.push((name.to_owned(), hex, content.len()));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Writes `manifest.json` listing every artifact with its SHA-256.
    pub fn finish(mut self) -> anyhow::Result<()> {
        self.files.sort();
        let list: Vec<_> =
            self.files.iter().map(|(p, h, n)| json!({ "path": p, "sha256": h, "bytes": n })).collect();
        let text = serde_json::to_string_pretty(&json!({ "files": list }))? + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn needles(cfg: &RunConfig, scene: &Scene) -> anyhow::Result<Vec<Needle>> {
    cfg.needles.iter().map(|v| Ok(Needle::new(v.iter().map(|&p| pt(p)).collect(), &scene.outer)?)).collect()
}

fn first_needle(cfg: &RunConfig, scene: &Scene) -> anyhow::Result<Needle> {
    needles(cfg, scene)?.into_iter().next().context("config lists no needles")
}

fn random_trace(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Complex64> {
    (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

fn sound_hard(scene: &Scene) -> anyhow::Result<()> {
    if scene.bc != BoundaryCondition::SoundHardNeumann {
        bail!("this command needs a sound-hard scene");
    }
    Ok(())
}

fn write_field(out: &mut Artifacts, field: &IndicatorField, scene: &Scene, title: &str) -> anyhow::Result<()> {
    let csv = field.to_csv();
    out.write("field.csv", &csv)?;
    out.write("field.svg", &svg::field(&csv, title)?)?;
    out.json(
        "summary.json",
        &json!({
            "points": field.points.len(),
            "estimated_points": field.estimated_region().len(),
            "components": field.region_components(),
            "hausdorff_to_scene": field.hausdorff_to_truth(&scene.obstacles),
            "spacing": field.spacing,
        }),
    )
}

pub fn run(cmd: Command, cfg: &RunConfig, scene: &Scene, out: &mut Artifacts) -> anyhow::Result<()> {
    let th = cfg.thresholds;
    let n_modes = cfg.n_modes();
    match cmd {
        Command::Forward => {
            let model = ForwardModel::new(scene, cfg.h)?;
            let (l0, ld) = model.dtn_pair(n_modes)?;
            out.write("lambda0.txt", &l0.to_text())?;
            out.write("lambdad.txt", &ld.to_text())?;
            out.write("lambda0_eigen.csv", &l0.eigen_csv())?;
            out.write("lambdad_eigen.csv", &ld.eigen_csv())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut csv = String::from("sample,lhs_re,lhs_im,rhs,residual\n");
            if scene.bc == BoundaryCondition::SoundHardNeumann {
                for i in 0..cfg.n_random {
                    let f = random_trace(&mut rng, l0.dim());
                    let e = energy_identity(&model, &l0, &ld, &f)?;
                    csv += &format!("{i},{:e},{:e},{:e},{:e}\n", e.lhs.re, e.lhs.im, e.rhs, e.residual);
                }
                out.write("energy_identity.csv", &csv)?;
            }
            out.json("admissibility.json", &check_admissibility(scene, cfg.h)?)?;
        }
        Command::Needle => {
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let nds = needles(cfg, scene)?;
            if nds.is_empty() {
                bail!("config lists no needles");
            }
            let seqs = ctx.fit_many(&nds)?;
            let mut summary = Vec::new();
            for (i, seq) in seqs.iter().enumerate() {
                out.write(&format!("needle_{i}_coeffs.csv"), &seq.to_csv())?;
                let mut terms = String::from("n,delta,order,alpha,condition\n");
                for t in &seq.terms {
                    terms += &format!("{},{},{},{:e},{:e}\n", t.n, t.delta, t.order, t.alpha, t.condition);
                }
                out.write(&format!("needle_{i}_terms.csv"), &terms)?;
                let warnings: Vec<String> = seq.warnings().iter().map(|w| w.to_string()).collect();
                summary.push(json!({ "tip": [seq.tip().x, seq.tip().y], "warnings": warnings }));
            }
            out.json("needles.json", &summary)?;
        }
        Command::Indicate => {
            sound_hard(scene)?;
            let model = ForwardModel::new(scene, cfg.h)?;
            let (l0, ld) = model.dtn_pair(n_modes)?;
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let nds = needles(cfg, scene)?;
            let seqs = ctx.fit_many(&nds)?;
            let mut summary = Vec::new();
            for (i, (nd, seq)) in nds.iter().zip(&seqs).enumerate() {
                let case = classify_tip(nd, scene);
                let tr = indicator_sequence(seq, &l0, &ld, &th)?.with_case(case);
                let csv = tr.to_csv();
                out.write(&format!("indicator_{i}.csv"), &csv)?;
                out.write(&format!("indicator_{i}.svg"), &svg::line(&csv, "n", "abs", true, &format!("indicator {i}"))?)?;
                summary.push(json!({
                    "tip": tr.tip, "case": case, "class": tr.class, "growth": tr.growth,
                    "limit": tr.limit, "imag_defect": tr.imag_defect, "min_real": tr.min_real,
                }));
            }
            out.json("indicators.json", &summary)?;
        }
        Command::Profile => {
            sound_hard(scene)?;
            let nd = first_needle(cfg, scene)?;
            let model = ForwardModel::new(scene, cfg.h)?;
            let (l0, ld) = model.dtn_pair(n_modes)?;
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let prof = indicator_profile(&nd, scene, &ctx, &l0, &ld, &cfg.t_grid(), &th)?;
            let csv = prof.to_csv();
            out.write("profile.csv", &csv)?;
            out.write("profile.svg", &svg::line(&csv, "t", "last_abs", true, "indicator profile")?)?;
            out.json("profile.json", &json!({ "t_hat": prof.t_hat, "impact_parameter": impact_parameter(&nd, scene) }))?;
        }
        Command::Reconstruct => {
            sound_hard(scene)?;
            let model = ForwardModel::new(scene, cfg.h)?;
            let (l0, ld) = model.dtn_pair(n_modes)?;
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let opts = ReconstructOptions { grid: cfg.grid_spec(), thresholds: th, pairing: Pairing::Sesquilinear };
            let field = reconstruct(&ctx, &l0, &ld, &opts)?;
            write_field(out, &field, scene, "reconstruction")?;
        }
        Command::Reflect => {
            sound_hard(scene)?;
            let nd = first_needle(cfg, scene)?;
            let model = ForwardModel::new(scene, cfg.h)?;
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let seq = ctx.fit(&nd)?;
            let run = reflected_run(&model, &seq, &cfg.ball_grid(), &th)?;
            let set = blowup_set_estimate(&run);
            let balls = run.balls_csv();
            let sigma = polyline_csv(&run.sigma_r);
            let needle_csv = polyline_csv(&run.needle);
            out.write("balls.csv", &balls)?;
            out.write("sigma_r.csv", &sigma)?;
            out.write("needle.csv", &needle_csv)?;
            out.write("blowup_set.csv", &polyline_csv(&set.points))?;
            out.write("reflect.svg", &svg::overlay(&balls, &[(&needle_csv, "gray"), (&sigma, "green")], "blowup set")?)?;
            let mut h1 = String::from("n,h1_sq\n");
            for (n, v) in &run.h1_norms {
                h1 += &format!("{n},{v:e}\n");
            }
            out.write("w_norms.csv", &h1)?;
            out.json("reflect.json", &json!({ "set_to_curve": set.set_to_curve, "curve_to_set": set.curve_to_set, "set_size": set.points.len() }))?;
        }
        Command::Conduct => {
            if !matches!(scene.bc, BoundaryCondition::Conductivity { .. }) {
                bail!("conduct needs a conductivity scene");
            }
            let (lg, l1) = dtn_gamma_pair(scene, n_modes, cfg.h)?;
            let ctx = FitContext::new(scene, &cfg.schedule)?;
            let nds = needles(cfg, scene)?;
            let mut summary = Vec::new();
            for (i, seq) in ctx.fit_many(&nds)?.iter().enumerate() {
                let tr = conductivity_indicator(seq, &lg, &l1, &th)?;
                let csv = tr.to_csv();
                out.write(&format!("indicator_{i}.csv"), &csv)?;
                summary.push(json!({ "tip": tr.tip, "class": tr.class, "growth": tr.growth, "sign": trace_sign(&tr, 3) }));
            }
            if !summary.is_empty() {
                out.json("indicators.json", &summary)?;
            }
            let opts = ReconstructOptions { grid: cfg.grid_spec(), thresholds: th, pairing: Pairing::Bilinear };
            let field = conductivity_classify(&ctx, &lg, &l1, &opts)?;
            write_field(out, &field, scene, "conductivity reconstruction")?;
        }
        Command::Poincare => {
            let c = poincare_constants(scene, cfg.h)?;
            let sm = smallness_check(scene, &c);
            let small_volume: Vec<bool> = scene.obstacles.iter().map(|o| small_volume_condition(o, scene.k)).collect();
            let mut margins = Vec::new();
            if scene.bc == BoundaryCondition::SoundHardNeumann && sm.ok_complement && sm.ok_obstacles {
                let subsets = vec![SubsetSpec::Full; scene.obstacles.len()];
                let bctx = BasicInequalityContext::new(scene, &subsets, cfg.h, n_modes)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                for _ in 0..cfg.n_random {
                    margins.push(bctx.check(&random_trace(&mut rng, bctx.lam0.dim()))?.margin);
                }
            }
            out.json(
                "poincare.json",
                &json!({
                    "constants": c, "smallness": sm, "small_volume": small_volume,
                    "basic_inequality_margins": margins,
                }),
            )?;
        }
    }
    Ok(())
}
