//! Numerical probe method for 2-D inverse obstacle problems.

pub mod blowup;
pub mod conductivity;
pub mod dtn;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod indicator;
pub mod linalg;
pub mod mesh;
pub mod needle;
pub mod poincare;
pub mod reflected;
pub mod special;

pub use blowup::{classify_growth, EnergyTrace, Growth, GrowthFit, Thresholds};
pub use dtn::{DtnMatrix, TraceBasis};
pub use error::{Error, Result};
pub use fem::ForwardModel;
pub use geometry::{BoundaryCondition, Needle, Point, Scene, SceneDesc, Shape, TipCase};
pub use indicator::{IndicatorField, IndicatorTrace, Pairing, PointClass, TraceClass};
pub use mesh::Mesh;
pub use needle::{FitContext, NeedleSequence, Schedule};
