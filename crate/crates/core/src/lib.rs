//! Simulation and hypothesis checking for one-dimensional stochastic
//! differential equations driven by a Brownian motion, a compensated
//! spectrally positive jump noise and a subordinator.
//!
//! The crate is organised bottom-up:
//!
//! * [`levy_measure`]: jump-intensity measures on `(0, ∞)`, their tail
//!   functionals and the critical small-tail exponent.
//! * [`noise`]: counter-based sampling of shareable, refinable noise
//!   realisations.
//! * [`sde`]: coefficient systems and the jump-adapted Euler scheme with the
//!   truncation and non-negativity devices.
//! * [`yw`]: Yamada–Watanabe test functions and their property checks.
//! * [`hypotheses`]: the condition checker producing structured verdicts.
//! * [`lab`]: coupled-noise experiments, refinement studies and scans.
//! * [`config`] and [`cli`]: the configuration-driven command line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod hypotheses;
pub mod lab;
pub mod levy_measure;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod yw;

pub use error::{Error, Result};
pub use hypotheses::{check_hypotheses, ConditionReport, Verdict};
pub use levy_measure::{LevyMeasure, MeasureShape, Role, ScanGrid};
pub use noise::{NoisePath, NoiseSpec, SmallJumpMode};
pub use sde::{Coefficient, JumpCoefficient, SdeSystem, SimulationMode, SolutionPath};
pub use yw::{Modulus, YwSequence};
