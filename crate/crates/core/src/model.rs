//! Validated description of the polling system: arrival rates, service and
//! switch-over distributions, the service discipline, and the derived loads
//! and mean cycle quantities everything else builds on.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionError, DistributionSpec, ThresholdSplit};

/// Service discipline, applied system-wide.
///
/// Gated: each queue serves exactly the customers present when the server
/// arrives there. Globally gated: one gate for the whole cycle, set when the
/// server reaches the first queue. Exhaustive: each queue is served until
/// empty. Within the first queue, high priority customers always go first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discipline {
    Gated,
    GloballyGated,
    Exhaustive,
}

impl std::fmt::Display for Discipline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Discipline::Gated => write!(f, "gated"),
            Discipline::GloballyGated => write!(f, "globally-gated"),
            Discipline::Exhaustive => write!(f, "exhaustive"),
        }
    }
}

/// Two-queue polling model with priority classes H and L in the first queue.
///
/// Poisson arrivals at rates `lambda_h`, `lambda_l` (queue 1) and `lambda_2`
/// (queue 2); switch-over `switch_1` from queue 1 to queue 2 and `switch_2`
/// back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollingModel {
    pub lambda_h: f64,
    pub lambda_l: f64,
    pub lambda_2: f64,
    pub service_h: DistributionSpec,
    pub service_l: DistributionSpec,
    pub service_2: DistributionSpec,
    pub switch_1: DistributionSpec,
    pub switch_2: DistributionSpec,
    pub discipline: Discipline,
}

/// One violated model invariant, as reported by [`PollingModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelViolation {
    NegativeRate {
        name: &'static str,
        value: f64,
    },
    NoArrivalsAtQueue1,
    Unstable {
        rho: f64,
    },
    ZeroMeanService {
        name: &'static str,
    },
    Distribution {
        name: &'static str,
        error: DistributionError,
    },
}

impl std::fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NegativeRate { name, value } => {
                write!(f, "arrival rate {name} must be nonnegative, got {value}")
            }
            Self::NoArrivalsAtQueue1 => write!(f, "queue 1 needs a positive total arrival rate"),
            Self::Unstable { rho } => write!(f, "total load rho = {rho} is not below 1"),
            Self::ZeroMeanService { name } => {
                write!(
                    f,
                    "service distribution {name} has zero mean but positive arrival rate"
                )
            }
            Self::Distribution { name, error } => write!(f, "{name}: {error}"),
        }
    }
}

/// Loads and mean cycle/visit/intervisit lengths implied by the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub rho_h: f64,
    pub rho_l: f64,
    pub rho_1: f64,
    pub rho_2: f64,
    pub rho: f64,
    /// E(C) = (E(S1) + E(S2)) / (1 - rho); independent of the cycle anchor.
    pub mean_cycle: f64,
    pub mean_visit_q1: f64,
    pub mean_visit_q2: f64,
    pub mean_intervisit_q1: f64,
    pub mean_intervisit_q2: f64,
}

impl PollingModel {
    /// Builds a model from a threshold split of the queue-1 arrival class.
    pub fn from_split(
        split: &ThresholdSplit,
        lambda_2: f64,
        service_2: DistributionSpec,
        switch_1: DistributionSpec,
        switch_2: DistributionSpec,
        discipline: Discipline,
    ) -> Self {
        Self {
            lambda_h: split.lambda_h,
            lambda_l: split.lambda_l,
            lambda_2,
            service_h: split.dist_h.clone(),
            service_l: split.dist_l.clone(),
            service_2,
            switch_1,
            switch_2,
            discipline,
        }
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda_h + self.lambda_l
    }

    /// Aggregate queue-1 service LST: the rate-weighted mixture of the high
    /// and low priority service transforms.
    pub fn beta_1(&self, omega: f64) -> f64 {
        let l1 = self.lambda_1();
        (self.lambda_h * self.service_h.lst(omega) + self.lambda_l * self.service_l.lst(omega)) / l1
    }

    pub fn beta_1_moment(&self, k: usize) -> f64 {
        let l1 = self.lambda_1();
        (self.lambda_h * self.service_h.moment(k) + self.lambda_l * self.service_l.moment(k)) / l1
    }

    /// Returns every violated invariant; an empty list means the model is
    /// valid and stable.
    pub fn validate(&self) -> Vec<ModelViolation> {
        let mut v = Vec::new();
        for (name, rate) in [
            ("lambda_h", self.lambda_h),
            ("lambda_l", self.lambda_l),
            ("lambda_2", self.lambda_2),
        ] {
            if rate.is_nan() || rate < 0.0 || !rate.is_finite() {
                v.push(ModelViolation::NegativeRate { name, value: rate });
            }
        }
        if !(self.lambda_1().is_finite()) || self.lambda_1() <= 0.0 {
            v.push(ModelViolation::NoArrivalsAtQueue1);
        }
        for (name, dist) in [
            ("service_h", &self.service_h),
            ("service_l", &self.service_l),
            ("service_2", &self.service_2),
            ("switch_1", &self.switch_1),
            ("switch_2", &self.switch_2),
        ] {
            if let Err(error) = dist.validate() {
                v.push(ModelViolation::Distribution { name, error });
            }
        }
        for (name, rate, dist) in [
            ("service_h", self.lambda_h, &self.service_h),
            ("service_l", self.lambda_l, &self.service_l),
            ("service_2", self.lambda_2, &self.service_2),
        ] {
            if rate > 0.0 && dist.validate().is_ok() && dist.mean() <= 0.0 {
                v.push(ModelViolation::ZeroMeanService { name });
            }
        }
        if v.is_empty() {
            let d = self.derive();
            if d.rho.is_nan() || d.rho >= 1.0 {
                v.push(ModelViolation::Unstable { rho: d.rho });
            }
        }
        v
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Loads and mean cycle quantities. The mean cycle length is
    /// `(E(S1) + E(S2)) / (1 - rho)`, the expected visit length at queue i is
    /// `rho_i E(C)` and the intervisit length `(1 - rho_i) E(C)`, for any of
    /// the three disciplines.
    pub fn derive(&self) -> DerivedQuantities {
        let rho_h = self.lambda_h * self.service_h.mean();
        let rho_l = self.lambda_l * self.service_l.mean();
        let rho_1 = rho_h + rho_l;
        let rho_2 = self.lambda_2 * self.service_2.mean();
        let rho = rho_1 + rho_2;
        let mean_cycle = (self.switch_1.mean() + self.switch_2.mean()) / (1.0 - rho);
        DerivedQuantities {
            rho_h,
            rho_l,
            rho_1,
            rho_2,
            rho,
            mean_cycle,
            mean_visit_q1: rho_1 * mean_cycle,
            mean_visit_q2: rho_2 * mean_cycle,
            mean_intervisit_q1: (1.0 - rho_1) * mean_cycle,
            mean_intervisit_q2: (1.0 - rho_2) * mean_cycle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::threshold_model;

    #[test]
    fn derive_matches_closed_forms() {
        let m = threshold_model(Discipline::Gated, 1.0);
        let d = m.derive();
        assert!((d.rho - 0.8).abs() < 1e-12);
        assert!((d.rho_1 - 0.6).abs() < 1e-12);
        assert!((d.mean_cycle - 10.0).abs() < 1e-12);
        assert!((d.mean_intervisit_q1 - 4.0).abs() < 1e-12);
        assert!((d.mean_visit_q1 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn derive_with_empty_queue1() {
        let mut m = threshold_model(Discipline::Gated, 1.0);
        m.lambda_h = 0.0;
        m.lambda_l = 0.0;
        let d = m.derive();
        assert_eq!(d.rho_1, 0.0);
        assert_eq!(d.mean_visit_q1, 0.0);
    }

    #[test]
    fn symmetric_model_has_equal_visits() {
        let m = PollingModel {
            lambda_h: 0.2,
            lambda_l: 0.1,
            lambda_2: 0.3,
            service_h: DistributionSpec::exponential(1.0),
            service_l: DistributionSpec::exponential(1.0),
            service_2: DistributionSpec::exponential(1.0),
            switch_1: DistributionSpec::deterministic(0.5),
            switch_2: DistributionSpec::deterministic(0.5),
            discipline: Discipline::Exhaustive,
        };
        let d = m.derive();
        assert!((d.mean_visit_q1 - d.mean_visit_q2).abs() < 1e-12);
    }

    #[test]
    fn validate_accepts_reference_model() {
        for disc in [
            Discipline::Gated,
            Discipline::GloballyGated,
            Discipline::Exhaustive,
        ] {
            assert!(threshold_model(disc, 1.0).is_valid());
        }
    }

    #[test]
    fn validate_flags_instability() {
        let mut m = threshold_model(Discipline::Gated, 1.0);
        m.lambda_h *= 2.0;
        m.lambda_l *= 2.0;
        m.lambda_2 *= 2.0;
        let violations = m.validate();
        assert!(violations.iter().any(|v| matches!(
            v,
            ModelViolation::Unstable { rho } if (*rho - 1.6).abs() < 1e-12
        )));
    }

    #[test]
    fn validate_flags_negative_rate() {
        let mut m = threshold_model(Discipline::Gated, 1.0);
        m.lambda_h = -0.1;
        let violations = m.validate();
        assert!(violations.iter().any(|v| matches!(
            v,
            ModelViolation::NegativeRate {
                name: "lambda_h",
                ..
            }
        )));
    }

    #[test]
    fn derive_is_split_invariant() {
        // Cycle quantities must not depend on how queue 1 is split.
        let unsplit = PollingModel {
            lambda_h: 0.6,
            lambda_l: 0.0,
            lambda_2: 0.2,
            service_h: DistributionSpec::exponential(1.0),
            service_l: DistributionSpec::exponential(1.0),
            service_2: DistributionSpec::exponential(1.0),
            switch_1: DistributionSpec::exponential(1.0),
            switch_2: DistributionSpec::exponential(1.0),
            discipline: Discipline::Gated,
        };
        let reference = unsplit.derive();
        for i in 1..=20 {
            let t = 0.5 * i as f64;
            let d = threshold_model(Discipline::Gated, t).derive();
            assert!((d.rho_1 - reference.rho_1).abs() < 1e-12);
            assert!((d.rho - reference.rho).abs() < 1e-12);
            assert!((d.mean_cycle - reference.mean_cycle).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_1_equals_base_for_split_models() {
        let m = threshold_model(Discipline::Gated, 1.0);
        let base = DistributionSpec::exponential(1.0);
        for i in 0..=30 {
            let w = 0.3 * i as f64;
            assert!((m.beta_1(w) - base.lst(w)).abs() < 1e-12);
        }
    }
}
