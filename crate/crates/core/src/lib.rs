//! Analysis toolkit for a two-queue cyclic polling system with high and low
//! priority customers in the first queue.
//!
//! The library has two independent engines for the same model:
//!
//! * an exact engine built on Laplace-Stieltjes transforms and probability
//!   generating functions ([`branching`], [`analysis`]), evaluated numerically
//!   through infinite products, busy-period fixed points and differentiation
//!   ([`transforms`]);
//! * a discrete-event simulator ([`simulator`]) with the same gate and
//!   priority semantics, used for cross-validation.
//!
//! Models are described by [`model::PollingModel`] over the distribution
//! catalogue in [`distributions`]. The supported service disciplines are
//! gated, globally gated and exhaustive; within the first queue, high
//! priority customers are always served before low priority ones.

pub mod analysis;
pub mod branching;
pub mod distributions;
pub mod model;
pub mod simulator;
pub mod transforms;

pub use analysis::{report, CustomerClass, PerformanceReport, ReportOptions, WaitForm};
pub use branching::{CycleAnchor, ModelTransforms, ProductTruncation};
pub use distributions::{DistributionSpec, ThresholdSplit};
pub use model::{DerivedQuantities, Discipline, PollingModel};
pub use simulator::{SimConfig, SimulationEstimate};
pub use transforms::{FixedPointConfig, MomentRequest};

#[cfg(test)]
pub(crate) mod testing {
    use crate::distributions::{split_by_threshold, DistributionSpec};
    use crate::model::{Discipline, PollingModel};

    /// Unit-rate exponential reference model: queue-1 arrivals at rate 0.6
    /// split at threshold `t`, queue-2 arrivals at rate 0.2, unit-mean
    /// exponential service and switch-over times everywhere.
    pub fn threshold_model(discipline: Discipline, t: f64) -> PollingModel {
        let base = DistributionSpec::exponential(1.0);
        let split = split_by_threshold(&base, 0.6, t).unwrap();
        PollingModel::from_split(
            &split,
            0.2,
            DistributionSpec::exponential(1.0),
            DistributionSpec::exponential(1.0),
            DistributionSpec::exponential(1.0),
            discipline,
        )
    }
}
