//! Dengue vector-control toolkit.
//!
//! An SIR+ASI compartmental model couples a human
//! susceptible/infected/recovered population to the mosquito life cycle
//! (aquatic phase plus susceptible/infected adults) under three
//! interventions: larvicide, adulticide and mechanical breeding-site
//! removal. On top of the dynamics sit:
//!
//! - [`r0`]: the basic reproduction number in closed form, validated
//!   against a next-generation-matrix construction, with 2-D control
//!   sweeps and threshold curves;
//! - [`integrator`]: fixed-step RK4 and adaptive Dormand-Prince
//!   integration producing dense trajectories;
//! - [`ocp`]: quadratic-cost optimal scheduling of the three controls by
//!   direct shooting with projected quasi-Newton descent;
//! - [`scenario`]: named scenario runs writing CSV artifacts, behind the
//!   `vctrl` command-line tool.

pub mod integrator;
pub mod model;
pub mod ocp;
pub mod policy;
pub mod r0;
pub mod scenario;

pub use integrator::{IntegratorConfig, Method, Scale, Trajectory};
pub use model::{ControlTriple, EpiParams, FullState, NormState};
pub use ocp::{Channel, CostWeights, OcpProblem, OcpSolution, SolveOptions, WeightCase};
pub use policy::{ControlBounds, ControlPolicy};
