//! Threshold sweeps: one analytic report per grid point, collected into CSV
//! rows with the split rates, per-class mean waits and standard deviations.
//!
//! Quantities that do not depend on the split (the queue-2 class and the
//! no-priority aggregate) are computed once from the base model, which also
//! keeps them bit-identical across rows.

use rayon::prelude::*;
use thiserror::Error;

use pollingkit::analysis::{report, AnalysisError, ReportOptions};
use pollingkit::branching::{BranchingError, ModelTransforms};
use pollingkit::model::Discipline;

use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("row at t = {t} failed: {source}")]
    Row {
        t: f64,
        #[source]
        source: AnalysisError,
    },
    #[error("base model failed: {0}")]
    Base(#[from] AnalysisError),
    #[error(transparent)]
    Branching(#[from] BranchingError),
}

/// One grid point of a threshold sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub t: f64,
    pub lambda_h: f64,
    pub lambda_l: f64,
    pub ew_h: f64,
    pub ew_l: f64,
    pub ew_1_weighted: f64,
    pub ew_1_nopriority: f64,
    pub ew_2: f64,
    pub sd_wh: f64,
    pub sd_wl: f64,
    pub sd_w1_weighted: f64,
    pub sd_w1_nopriority: f64,
}

pub const CSV_HEADER: &str = "t,lambda_H,lambda_L,EW_H,EW_L,EW_1_weighted,EW_1_nopriority,EW_2,\
sd_WH,sd_WL,sd_W1_weighted,sd_W1_nopriority";

impl SweepRow {
    /// CSV line with 12 significant digits per value.
    pub fn to_csv(&self) -> String {
        let v = [
            self.t,
            self.lambda_h,
            self.lambda_l,
            self.ew_h,
            self.ew_l,
            self.ew_1_weighted,
            self.ew_1_nopriority,
            self.ew_2,
            self.sd_wh,
            self.sd_wl,
            self.sd_w1_weighted,
            self.sd_w1_nopriority,
        ];
        v.iter()
            .map(|x| format!("{x:.11e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Grid argmin of the weighted queue-1 mean wait (ties toward smaller t).
    pub argmin_mean_t: f64,
    /// Grid argmin of the weighted queue-1 standard deviation.
    pub argmin_sd_t: f64,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    /// Thresholds of strict interior local minima of `sd_W1_weighted`.
    pub fn sd_local_minima(&self) -> Vec<f64> {
        local_minima(&self.rows, |r| r.sd_w1_weighted)
    }
}

fn local_minima(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..rows.len().saturating_sub(1) {
        let (a, b, c) = (f(&rows[i - 1]), f(&rows[i]), f(&rows[i + 1]));
        if b < a && b < c {
            out.push(rows[i].t);
        }
    }
    out
}

fn argmin(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> f64 {
    let mut best_t = rows[0].t;
    let mut best = f(&rows[0]);
    for r in &rows[1..] {
        let v = f(r);
        if v < best {
            best = v;
            best_t = r.t;
        }
    }
    best_t
}

/// Grid points `t_min, t_min + step, ...` up to `t_max` (inclusive within
/// half a step of rounding).
pub fn grid_points(t_min: f64, t_max: f64, step: f64) -> Vec<f64> {
    let n = ((t_max - t_min) / step + 0.5).floor() as usize;
    (0..=n).map(|i| t_min + i as f64 * step).collect()
}

/// Runs the analytic sweep over the scenario's base class. Rows are computed
/// in parallel and ordered by threshold.
pub fn run_sweep(
    scenario: &Scenario,
    discipline: Discipline,
    t_min: f64,
    t_max: f64,
    step: f64,
) -> Result<SweepOutcome, SweepError> {
    let base_model = scenario.base_model(discipline)?;
    let base_tr = ModelTransforms::new(base_model)?;
    let base_report = report(&base_tr, &ReportOptions::default())?;
    let ew_2 = base_report
        .queue2
        .as_ref()
        .map(|q| q.mean_wait)
        .unwrap_or(f64::NAN);
    let ew_np = base_report.queue1_no_priority.mean_wait;
    let sd_np = base_report.queue1_no_priority.std_wait;

    let row_options = ReportOptions {
        include_queue2: false,
        ..ReportOptions::default()
    };
    let rows: Result<Vec<SweepRow>, SweepError> = grid_points(t_min, t_max, step)
        .into_par_iter()
        .map(|t| {
            let model = scenario
                .model_at_threshold(discipline, t)
                .map_err(SweepError::Scenario)?;
            let tr = ModelTransforms::new(model).map_err(SweepError::Branching)?;
            let rep = report(&tr, &row_options).map_err(|source| SweepError::Row { t, source })?;
            Ok(SweepRow {
                t,
                lambda_h: rep.high.arrival_rate,
                lambda_l: rep.low.arrival_rate,
                ew_h: rep.high.mean_wait,
                ew_l: rep.low.mean_wait,
                ew_1_weighted: rep.queue1_weighted_mean_wait,
                ew_1_nopriority: ew_np,
                ew_2,
                sd_wh: rep.high.std_wait,
                sd_wl: rep.low.std_wait,
                sd_w1_weighted: rep.queue1_weighted_std_wait,
                sd_w1_nopriority: sd_np,
            })
        })
        .collect();
    let rows = rows?;
    Ok(SweepOutcome {
        argmin_mean_t: argmin(&rows, |r| r.ew_1_weighted),
        argmin_sd_t: argmin(&rows, |r| r.sd_w1_weighted),
        rows,
    })
}
