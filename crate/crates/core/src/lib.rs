//! Uncertainty quantification toolkit for black-box numerical models.
//!
//! The crate is organised by task:
//!
//! - [`dataserver`]: named-column tables and their text file format;
//! - [`distributions`] and [`random`]: parametric laws and the seeded generator;
//! - [`design`]: designs of experiments and dependence induction;
//! - [`heatmodel`]: the transient heat-conduction benchmark;
//! - [`pc`], [`ann`], [`gp`]: surrogate models;
//! - [`sensitivity`]: Morris, FAST and Sobol indices;
//! - [`optimizer`]: simplex, Pareto evolutionary loop and EGO.
//!
//! Every stochastic routine takes an explicit [`random::RandomStream`], so that a
//! study is a pure function of its configuration and seed.

pub mod ann;
pub mod dataserver;
pub mod design;
pub mod distributions;
pub mod gp;
pub mod heatmodel;
pub mod model;
pub mod optimizer;
pub mod pc;
pub mod random;
pub mod sensitivity;
pub mod special;

mod textfmt;

pub use dataserver::DataTable;
pub use distributions::Distribution;
pub use model::{EvalContext, Model, ModelError};
pub use random::RandomStream;
