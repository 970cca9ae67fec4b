//! Temporary-fork probabilities, Monte Carlo mining simulation, and
//! evolutionary dynamics of mining-pool populations in proof-of-work
//! networks.
//!
//! The crate has three layers:
//!
//! * [`fork_model`] gives closed-form fork, fail and uncle probabilities of
//!   each mining pool, and the expected rewards they imply, for a network
//!   with Poisson block arrivals and a fixed propagation delay.
//! * [`mining_sim`] is a seeded discrete-event simulator of the same
//!   generative process, used as an independent check of the closed forms.
//! * [`evolution`], [`equilibrium`] and [`metrics`] treat pool choice as an
//!   evolutionary game: replicator dynamics over the population simplex,
//!   analytic equilibrium classification with stability certificates, and
//!   centralization measures.
//!
//! [`chain_data`] ingests block and fork records from CSV files so the same
//! statistics can be computed on recorded chain history.
//!
//! The numeric modules are generic over the floating-point scalar through
//! the [`Real`] trait; the crate root exports `f64` aliases for the common
//! case.

pub mod chain_data;
pub mod equilibrium;
pub mod error;
pub mod evolution;
pub mod fork_model;
pub mod metrics;
pub mod mining_sim;

pub use error::{Error, Result};
pub use fork_model::Mode;
pub use mining_sim::{SplitMode, TieMode};

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar the numeric modules are generic over.
///
/// Implemented for `f32` and `f64`. The helper methods convert constants at
/// call sites without the `NumCast::from(..).unwrap()` ceremony.
pub trait Real:
    Float + FromPrimitive + NumCast + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`. Every constant in this crate
    /// is finite, so the conversion cannot fail for a float type.
    #[inline]
    fn c(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite constant fits any float type")
    }

    /// Widens to `f64` at reporting boundaries.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `f64` aliases for the generic core types.
pub type BlockSizeModel = fork_model::BlockSizeModel<f64>;
pub type NetworkParams = fork_model::NetworkParams<f64>;
pub type HashDistribution = fork_model::HashDistribution<f64>;
pub type ForkRace = fork_model::ForkRace<f64>;
pub type SimConfig = mining_sim::SimConfig<f64>;
pub type SimReport = mining_sim::SimReport<f64>;
pub type PoolMarket = evolution::PoolMarket<f64>;
pub type PopulationState = evolution::PopulationState<f64>;
pub type Trajectory = evolution::Trajectory<f64>;
pub type EquilibriumResult = equilibrium::EquilibriumResult<f64>;
pub type InvasionReport = equilibrium::InvasionReport<f64>;
pub type SweepSpec = metrics::SweepSpec<f64>;
