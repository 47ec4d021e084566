//! Planar geometrically exact beams coupled with optimal control and optimal
//! design.
//!
//! * [`beam`]: rotations, sections, strain and stress measures.
//! * [`fem`]: isoparametric beam elements, follower loads and a Newton solver.
//! * [`optimality`]: costs, sensitivities, KKT residuals and adjoint gradients.
//! * [`surrogate`]: moving least squares response surfaces.
//! * [`evolutionary`]: SADE and GRADE.
//! * [`harness`]: experiment configs, presets, statistics and CSV export.

pub mod beam;
pub mod error;
pub mod evolutionary;
pub mod fem;
pub mod harness;
pub mod optimality;
pub mod surrogate;

pub use beam::{AxialVector3, CrossSection, DesignRole, Rotation3, SectionLaw, Strains2D};
pub use error::{Error, Result};
pub use evolutionary::{Chromosome, GaSettings, Method as GaMethod, Outcome as GaOutcome};
pub use fem::{Configuration, DesignField, LoadCase, LoadPattern, Mesh, NewtonOptions};
pub use optimality::{ControlProblem, DesignProblem, KktResidual};
pub use surrogate::{DiffuseModel, SampleSet};
