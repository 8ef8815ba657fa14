//! Scenario files: a JSON description of the model, an optional threshold
//! sweep, and simulation options.
//!
//! Queue 1 is given either as an explicit pair of priority classes or as a
//! base exponential class plus a threshold; the latter is what sweeps vary.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pollingkit::distributions::{split_by_threshold, DistributionSpec};
use pollingkit::model::{Discipline, PollingModel};
use pollingkit::simulator::SimConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error at /{pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unstable model: rho = {rho}")]
    Unstable { rho: f64 },
    #[error("model violations: {0}")]
    Violations(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub discipline: Discipline,
    pub queue1: Queue1Spec,
    pub queue2: QueueSpec,
    pub switch_over: SwitchOverSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    /// Default output path; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Queue1Spec {
    #[serde(default)]
    pub base: Option<BaseClassSpec>,
    #[serde(default)]
    pub classes: Option<PriorityClassesSpec>,
}

/// A single arrival class split by a service-time threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseClassSpec {
    pub lambda: f64,
    pub service: DistributionSpec,
    /// Jobs with service below the threshold get high priority. Optional
    /// when the scenario is only used for sweeping.
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityClassesSpec {
    pub lambda_h: f64,
    pub service_h: DistributionSpec,
    pub lambda_l: f64,
    pub service_l: DistributionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub lambda: f64,
    pub service: DistributionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchOverSpec {
    pub s1: DistributionSpec,
    pub s2: DistributionSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub seed: u64,
    pub warmup_customers: u64,
    pub measured_customers: u64,
    pub replications: u32,
    pub preemptive_high: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            warmup_customers: 100_000,
            measured_customers: 1_000_000,
            replications: 10,
            preemptive_high: false,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario =
            serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
                pointer: e.path().to_string().replace('.', "/"),
                message: e.inner().to_string(),
            })?;
        scenario.check()?;
        Ok(scenario)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        match (&self.queue1.base, &self.queue1.classes) {
            (None, None) => {
                return Err(ScenarioError::Invalid(
                    "queue1 needs either `base` or `classes`".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ScenarioError::Invalid(
                    "queue1 takes `base` or `classes`, not both".into(),
                ))
            }
            _ => {}
        }
        if let Some(sweep) = &self.sweep {
            if sweep.t_min.is_nan() || sweep.t_min <= 0.0 {
                return Err(ScenarioError::Invalid(
                    "sweep t_min must be positive".into(),
                ));
            }
            if sweep.step.is_nan() || sweep.step <= 0.0 {
                return Err(ScenarioError::Invalid("sweep step must be positive".into()));
            }
            if sweep.t_max < sweep.t_min {
                return Err(ScenarioError::Invalid(
                    "sweep t_max must not be below t_min".into(),
                ));
            }
            if self.queue1.base.is_none() {
                return Err(ScenarioError::Invalid(
                    "threshold sweeps need queue1.base".into(),
                ));
            }
        }
        Ok(())
    }

    /// The model at the scenario's own threshold (or explicit classes).
    pub fn model(&self, discipline: Discipline) -> Result<PollingModel, ScenarioError> {
        let model = if let Some(classes) = &self.queue1.classes {
            PollingModel {
                lambda_h: classes.lambda_h,
                lambda_l: classes.lambda_l,
                lambda_2: self.queue2.lambda,
                service_h: classes.service_h.clone(),
                service_l: classes.service_l.clone(),
                service_2: self.queue2.service.clone(),
                switch_1: self.switch_over.s1.clone(),
                switch_2: self.switch_over.s2.clone(),
                discipline,
            }
        } else {
            let base = self.queue1.base.as_ref().expect("checked in parse");
            let t = base.threshold.ok_or_else(|| {
                ScenarioError::Invalid("queue1.base.threshold is required here".into())
            })?;
            self.model_at_threshold(discipline, t)?
        };
        validate_model(&model)?;
        Ok(model)
    }

    /// The base-class model at an explicit threshold (used by sweeps).
    pub fn model_at_threshold(
        &self,
        discipline: Discipline,
        t: f64,
    ) -> Result<PollingModel, ScenarioError> {
        let base = self
            .queue1
            .base
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("queue1.base is required".into()))?;
        let split = split_by_threshold(&base.service, base.lambda, t)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(PollingModel::from_split(
            &split,
            self.queue2.lambda,
            self.queue2.service.clone(),
            self.switch_over.s1.clone(),
            self.switch_over.s2.clone(),
            discipline,
        ))
    }

    /// The queue-1 class without priorities: everything in one FCFS class.
    pub fn base_model(&self, discipline: Discipline) -> Result<PollingModel, ScenarioError> {
        let (lambda, service) = if let Some(base) = &self.queue1.base {
            (base.lambda, base.service.clone())
        } else {
            let c = self.queue1.classes.as_ref().expect("checked in parse");
            let l1 = c.lambda_h + c.lambda_l;
            let mixture = DistributionSpec::Mixture {
                weights: vec![c.lambda_h / l1, c.lambda_l / l1],
                components: vec![c.service_h.clone(), c.service_l.clone()],
            };
            (l1, mixture)
        };
        let model = PollingModel {
            lambda_h: lambda,
            lambda_l: 0.0,
            service_h: service.clone(),
            service_l: service,
            lambda_2: self.queue2.lambda,
            service_2: self.queue2.service.clone(),
            switch_1: self.switch_over.s1.clone(),
            switch_2: self.switch_over.s2.clone(),
            discipline,
        };
        validate_model(&model)?;
        Ok(model)
    }

    pub fn sim_config(
        &self,
        model: PollingModel,
        seed: Option<u64>,
        preemptive: bool,
    ) -> SimConfig {
        let s = self.simulation;
        SimConfig {
            model,
            seed: seed.unwrap_or(s.seed),
            warmup_customers: s.warmup_customers,
            measured_customers: s.measured_customers,
            replications: s.replications,
            preemptive_high: preemptive || s.preemptive_high,
        }
    }
}

fn validate_model(model: &PollingModel) -> Result<(), ScenarioError> {
    let violations = model.validate();
    if violations.is_empty() {
        return Ok(());
    }
    if let Some(pollingkit::model::ModelViolation::Unstable { rho }) = violations
        .iter()
        .find(|v| matches!(v, pollingkit::model::ModelViolation::Unstable { .. }))
    {
        return Err(ScenarioError::Unstable { rho: *rho });
    }
    Err(ScenarioError::Violations(
        violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; "),
    ))
}
