//! Discrete-event simulator for the same polling model: a cyclic server with
//! gate snapshots per discipline, nonpreemptive (or optionally preemptive)
//! priority in queue 1, and switch-over times. Serves as an independent
//! oracle for the transform analysis.
//!
//! The server never idles at a queue: empty visits take zero time and the
//! switch-overs keep cycling, which is what makes the mean cycle length
//! `(E(S1) + E(S2)) / (1 - rho)`. Waiting time is measured from arrival to
//! first service start, so preemption does not change low priority waits.
//!
//! Statistics come from independent replications: each replication produces
//! one estimate per quantity and the spread across replications gives the
//! standard errors. Replications run in parallel; aggregation is by
//! replication index, so results are bit-identical regardless of schedule.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::PerformanceReport;
use crate::model::{Discipline, PollingModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("model is unstable or invalid: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Simulation run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: PollingModel,
    pub seed: u64,
    /// Served customers discarded before measurement starts, per replication.
    pub warmup_customers: u64,
    /// Served customers measured per replication.
    pub measured_customers: u64,
    pub replications: u32,
    /// High priority arrivals interrupt a low priority service in progress
    /// (exhaustive service only); the interrupted service resumes from its
    /// remaining work.
    pub preemptive_high: bool,
}

impl SimConfig {
    pub fn new(model: PollingModel, seed: u64) -> Self {
        Self {
            model,
            seed,
            warmup_customers: 100_000,
            measured_customers: 1_000_000,
            replications: 10,
            preemptive_high: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.replications == 0 {
            return Err(SimError::InvalidConfig("replications must be >= 1".into()));
        }
        if self.preemptive_high && self.model.discipline != Discipline::Exhaustive {
            return Err(SimError::InvalidConfig(
                "preemptive high priority service requires the exhaustive discipline".into(),
            ));
        }
        for (name, rate) in [
            ("lambda_h", self.model.lambda_h),
            ("lambda_l", self.model.lambda_l),
            ("lambda_2", self.model.lambda_2),
        ] {
            if rate.is_nan() || rate < 0.0 || !rate.is_finite() {
                return Err(SimError::InvalidModel(format!(
                    "arrival rate {name} must be nonnegative, got {rate}"
                )));
            }
        }
        let d = self.model.derive();
        if d.rho.is_nan() || d.rho >= 1.0 {
            return Err(SimError::InvalidModel(format!(
                "total load rho = {} is not below 1",
                d.rho
            )));
        }
        Ok(())
    }
}

/// Mean/second-moment estimate with standard errors over replications.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub se_mean: f64,
    pub second_moment: f64,
    pub se_second_moment: f64,
    pub samples: u64,
}

/// Per-class waiting-time estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaitEstimate {
    pub mean: f64,
    pub se_mean: f64,
    pub second_moment: f64,
    pub se_second_moment: f64,
    pub std_dev: f64,
    pub se_std_dev: f64,
    pub served: u64,
    /// No customer of this class was observed (zero arrival rate).
    pub missing: bool,
}

/// Point estimates with standard errors and run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub high: WaitEstimate,
    pub low: WaitEstimate,
    pub queue2: WaitEstimate,
    /// Cycle anchored at visit beginnings to queue 1.
    pub cycle_begin_q1: MomentEstimate,
    /// Cycle anchored at visit completions to queue 1.
    pub cycle_complete_q1: MomentEstimate,
    pub intervisit_q1: MomentEstimate,
    /// Number of queue-1 customers found at queue-1 polling epochs.
    pub queue1_at_poll: MomentEstimate,
    pub seed: u64,
    pub replications: u32,
    pub warmup_customers: u64,
    pub measured_customers: u64,
    /// Set when the measurement budget is below 10^4 customers.
    pub low_precision: bool,
    /// No arrivals at all; every estimate is missing.
    pub empty: bool,
}

// ----- single-replication machinery -----

#[derive(Debug, Clone, Copy)]
struct Customer {
    arrival: f64,
    id: u64,
    /// Remaining work of a preempted service.
    remaining: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prio {
    High,
    Low,
}

#[derive(Debug)]
enum Server {
    AtQ1,
    ServingQ1 {
        cust: Customer,
        prio: Prio,
        done: f64,
    },
    SwitchingToQ2 {
        done: f64,
    },
    AtQ2,
    ServingQ2 {
        cust: Customer,
        done: f64,
    },
    SwitchingToQ1 {
        done: f64,
    },
}

#[derive(Debug, Default, Clone, Copy)]
struct Acc {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    fn second(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sumsq / self.n as f64
        }
    }
}

#[derive(Debug, Default)]
struct RepResult {
    wait: [Acc; 3],
    cycle_begin: Acc,
    cycle_complete: Acc,
    intervisit: Acc,
    q1_at_poll: Acc,
}

const ARRIVAL_CLASSES: usize = 3; // H, L, queue 2

struct Replication<'a, W: Write> {
    model: &'a PollingModel,
    preemptive: bool,
    rng: ChaCha8Rng,
    clock: f64,
    next_arrival: [f64; ARRIVAL_CLASSES],
    q_h: VecDeque<Customer>,
    q_l: VecDeque<Customer>,
    q_2: VecDeque<Customer>,
    gate_h: usize,
    gate_l: usize,
    gate_2: usize,
    served_gate_h: usize,
    served_gate_l: usize,
    served_gate_2: usize,
    server: Server,
    started_total: u64,
    warmup: u64,
    quota: u64,
    next_id: u64,
    last_visit_begin_q1: Option<f64>,
    last_visit_complete_q1: Option<f64>,
    result: RepResult,
    log: Option<&'a mut W>,
}

impl<'a, W: Write> Replication<'a, W> {
    fn new(
        model: &'a PollingModel,
        preemptive: bool,
        seed: u64,
        warmup: u64,
        quota: u64,
        log: Option<&'a mut W>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rates = [model.lambda_h, model.lambda_l, model.lambda_2];
        let mut next_arrival = [f64::INFINITY; ARRIVAL_CLASSES];
        for (slot, &rate) in next_arrival.iter_mut().zip(&rates) {
            if rate > 0.0 {
                *slot = sample_exp(&mut rng, rate);
            }
        }
        Self {
            model,
            preemptive,
            rng,
            clock: 0.0,
            next_arrival,
            q_h: VecDeque::new(),
            q_l: VecDeque::new(),
            q_2: VecDeque::new(),
            gate_h: 0,
            gate_l: 0,
            gate_2: 0,
            served_gate_h: 0,
            served_gate_l: 0,
            served_gate_2: 0,
            server: Server::AtQ1,
            started_total: 0,
            warmup,
            quota,
            next_id: 0,
            last_visit_begin_q1: None,
            last_visit_complete_q1: None,
            result: RepResult::default(),
            log,
        }
    }

    fn emit(&mut self, event: &str, queue: &str, class: &str, id: Option<u64>) {
        if let Some(log) = self.log.as_deref_mut() {
            let id_text = id.map_or_else(|| "-".to_string(), |v| v.to_string());
            writeln!(log, "{:.9},{event},{queue},{class},{id_text}", self.clock)
                .expect("event log write failed");
        }
    }

    fn in_window(&self) -> bool {
        self.started_total >= self.warmup && self.started_total < self.warmup + self.quota
    }

    fn done(&self) -> bool {
        self.started_total >= self.warmup + self.quota
    }

    fn run(mut self) -> RepResult {
        // Start at a visit beginning to queue 1 with an empty system.
        self.begin_visit_q1();
        self.resolve();
        while !self.done() {
            let server_time = match self.server {
                Server::ServingQ1 { done, .. }
                | Server::ServingQ2 { done, .. }
                | Server::SwitchingToQ2 { done }
                | Server::SwitchingToQ1 { done } => done,
                Server::AtQ1 | Server::AtQ2 => unreachable!("resolve leaves a timed state"),
            };
            let mut class = 0;
            let mut arrival_time = self.next_arrival[0];
            for c in 1..ARRIVAL_CLASSES {
                if self.next_arrival[c] < arrival_time {
                    arrival_time = self.next_arrival[c];
                    class = c;
                }
            }
            // Arrivals win ties, so a customer arriving exactly at a polling
            // epoch stands before the gate.
            if arrival_time <= server_time {
                self.clock = arrival_time;
                self.process_arrival(class);
            } else {
                self.clock = server_time;
                self.process_server_event();
                self.resolve();
            }
        }
        self.result
    }

    fn process_arrival(&mut self, class: usize) {
        let id = self.next_id;
        self.next_id += 1;
        let cust = Customer {
            arrival: self.clock,
            id,
            remaining: None,
        };
        let rate = [
            self.model.lambda_h,
            self.model.lambda_l,
            self.model.lambda_2,
        ][class];
        self.next_arrival[class] = self.clock + sample_exp(&mut self.rng, rate);
        match class {
            0 => {
                self.emit("arrival", "1", "H", Some(id));
                self.q_h.push_back(cust);
                if self.preemptive {
                    self.maybe_preempt();
                }
                self.resolve_if_untimed();
            }
            1 => {
                self.emit("arrival", "1", "L", Some(id));
                self.q_l.push_back(cust);
            }
            _ => {
                self.emit("arrival", "2", "2", Some(id));
                self.q_2.push_back(cust);
            }
        }
    }

    /// A high priority arrival interrupts a low priority service in
    /// progress; the remaining work returns to the head of the low queue.
    fn maybe_preempt(&mut self) {
        if let Server::ServingQ1 {
            cust,
            prio: Prio::Low,
            done,
        } = self.server
        {
            let mut resumed = cust;
            resumed.remaining = Some(done - self.clock);
            self.emit("preempt", "1", "L", Some(resumed.id));
            self.q_l.push_front(resumed);
            self.server = Server::AtQ1;
        }
    }

    fn resolve_if_untimed(&mut self) {
        if matches!(self.server, Server::AtQ1 | Server::AtQ2) {
            self.resolve();
        }
    }

    fn process_server_event(&mut self) {
        match std::mem::replace(&mut self.server, Server::AtQ1) {
            Server::ServingQ1 { cust, prio, .. } => {
                let (queue, class) = ("1", if prio == Prio::High { "H" } else { "L" });
                self.emit("service_end", queue, class, Some(cust.id));
                self.server = Server::AtQ1;
            }
            Server::ServingQ2 { cust, .. } => {
                self.emit("service_end", "2", "2", Some(cust.id));
                self.server = Server::AtQ2;
            }
            Server::SwitchingToQ2 { .. } => {
                self.emit("switch_end", "-", "-", None);
                self.begin_visit_q2();
                self.server = Server::AtQ2;
            }
            Server::SwitchingToQ1 { .. } => {
                self.emit("switch_end", "-", "-", None);
                self.begin_visit_q1();
                self.server = Server::AtQ1;
            }
            untimed => {
                self.server = untimed;
            }
        }
    }

    fn begin_visit_q1(&mut self) {
        self.emit("visit_begin", "1", "-", None);
        if self.in_window() {
            if let Some(prev) = self.last_visit_begin_q1 {
                self.result.cycle_begin.push(self.clock - prev);
            }
            if let Some(complete) = self.last_visit_complete_q1 {
                self.result.intervisit.push(self.clock - complete);
            }
            self.result
                .q1_at_poll
                .push((self.q_h.len() + self.q_l.len()) as f64);
        }
        self.last_visit_begin_q1 = Some(self.clock);
        match self.model.discipline {
            Discipline::Gated => {
                self.gate_h = self.q_h.len();
                self.gate_l = self.q_l.len();
                self.emit("gate", "1", "-", None);
            }
            Discipline::GloballyGated => {
                self.gate_h = self.q_h.len();
                self.gate_l = self.q_l.len();
                self.gate_2 = self.q_2.len();
                self.emit("gate", "1", "-", None);
                self.emit("gate", "2", "-", None);
            }
            Discipline::Exhaustive => {}
        }
        self.served_gate_h = 0;
        self.served_gate_l = 0;
    }

    fn begin_visit_q2(&mut self) {
        self.emit("visit_begin", "2", "-", None);
        if self.model.discipline == Discipline::Gated {
            self.gate_2 = self.q_2.len();
            self.emit("gate", "2", "-", None);
        }
        self.served_gate_2 = 0;
    }

    /// Runs the untimed server decisions until the server is in a timed
    /// state again. Visits to empty (or exhausted-gate) queues complete
    /// immediately and the next switch-over starts.
    fn resolve(&mut self) {
        loop {
            match self.server {
                Server::AtQ1 => {
                    if let Some((cust, prio)) = self.select_q1() {
                        self.start_service_q1(cust, prio);
                    } else {
                        self.emit("visit_end", "1", "-", None);
                        if self.in_window() {
                            if let Some(prev) = self.last_visit_complete_q1 {
                                self.result.cycle_complete.push(self.clock - prev);
                            }
                        }
                        self.last_visit_complete_q1 = Some(self.clock);
                        let s = self.model.switch_1.sample(&mut self.rng);
                        self.emit("switch_begin", "-", "-", None);
                        self.server = Server::SwitchingToQ2 {
                            done: self.clock + s,
                        };
                        return;
                    }
                }
                Server::AtQ2 => {
                    if let Some(cust) = self.select_q2() {
                        self.start_service_q2(cust);
                    } else {
                        self.emit("visit_end", "2", "-", None);
                        let s = self.model.switch_2.sample(&mut self.rng);
                        self.emit("switch_begin", "-", "-", None);
                        self.server = Server::SwitchingToQ1 {
                            done: self.clock + s,
                        };
                        return;
                    }
                }
                _ => return,
            }
        }
    }

    fn select_q1(&mut self) -> Option<(Customer, Prio)> {
        match self.model.discipline {
            Discipline::Exhaustive => {
                if let Some(c) = self.q_h.pop_front() {
                    Some((c, Prio::High))
                } else {
                    self.q_l.pop_front().map(|c| (c, Prio::Low))
                }
            }
            Discipline::Gated | Discipline::GloballyGated => {
                if self.served_gate_h < self.gate_h {
                    self.served_gate_h += 1;
                    Some((
                        self.q_h.pop_front().expect("gated customer present"),
                        Prio::High,
                    ))
                } else if self.served_gate_l < self.gate_l {
                    self.served_gate_l += 1;
                    Some((
                        self.q_l.pop_front().expect("gated customer present"),
                        Prio::Low,
                    ))
                } else {
                    None
                }
            }
        }
    }

    fn select_q2(&mut self) -> Option<Customer> {
        match self.model.discipline {
            Discipline::Exhaustive => self.q_2.pop_front(),
            Discipline::Gated | Discipline::GloballyGated => {
                if self.served_gate_2 < self.gate_2 {
                    self.served_gate_2 += 1;
                    Some(self.q_2.pop_front().expect("gated customer present"))
                } else {
                    None
                }
            }
        }
    }

    fn start_service_q1(&mut self, cust: Customer, prio: Prio) {
        let class_idx = if prio == Prio::High { 0 } else { 1 };
        let dist = if prio == Prio::High {
            &self.model.service_h
        } else {
            &self.model.service_l
        };
        let service = match cust.remaining {
            Some(rest) => rest,
            None => {
                self.record_start(class_idx, cust.arrival);
                dist.sample(&mut self.rng)
            }
        };
        let class = if prio == Prio::High { "H" } else { "L" };
        self.emit("service_start", "1", class, Some(cust.id));
        self.server = Server::ServingQ1 {
            cust,
            prio,
            done: self.clock + service,
        };
    }

    fn start_service_q2(&mut self, cust: Customer) {
        self.record_start(2, cust.arrival);
        let service = self.model.service_2.sample(&mut self.rng);
        self.emit("service_start", "2", "2", Some(cust.id));
        self.server = Server::ServingQ2 {
            cust,
            done: self.clock + service,
        };
    }

    fn record_start(&mut self, class_idx: usize, arrival: f64) {
        if self.in_window() {
            let wait = self.clock - arrival;
            debug_assert!(wait >= 0.0, "negative waiting time");
            self.result.wait[class_idx].push(wait);
        }
        self.started_total += 1;
    }
}

fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

fn replication_seed(seed: u64, rep: u32) -> u64 {
    seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

// ----- aggregation across replications -----

fn aggregate_moment(values: &[(f64, f64, u64)]) -> MomentEstimate {
    let means: Vec<f64> = values.iter().map(|v| v.0).collect();
    let seconds: Vec<f64> = values.iter().map(|v| v.1).collect();
    let samples: u64 = values.iter().map(|v| v.2).sum();
    let (mean, se_mean) = mean_and_se(&means);
    let (second, se_second) = mean_and_se(&seconds);
    MomentEstimate {
        mean,
        se_mean,
        second_moment: second,
        se_second_moment: se_second,
        samples,
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 || values.iter().any(|v| v.is_nan()) {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate_wait(reps: &[RepResult], class_idx: usize) -> WaitEstimate {
    let served: u64 = reps.iter().map(|r| r.wait[class_idx].n).sum();
    if served == 0 {
        return WaitEstimate {
            mean: f64::NAN,
            se_mean: f64::NAN,
            second_moment: f64::NAN,
            se_second_moment: f64::NAN,
            std_dev: f64::NAN,
            se_std_dev: f64::NAN,
            served: 0,
            missing: true,
        };
    }
    let means: Vec<f64> = reps.iter().map(|r| r.wait[class_idx].mean()).collect();
    let seconds: Vec<f64> = reps.iter().map(|r| r.wait[class_idx].second()).collect();
    let stds: Vec<f64> = reps
        .iter()
        .map(|r| {
            let m = r.wait[class_idx].mean();
            (r.wait[class_idx].second() - m * m).max(0.0).sqrt()
        })
        .collect();
    let (mean, se_mean) = mean_and_se(&means);
    let (second, se_second) = mean_and_se(&seconds);
    let (std_dev, se_std) = mean_and_se(&stds);
    WaitEstimate {
        mean,
        se_mean,
        second_moment: second,
        se_second_moment: se_second,
        std_dev,
        se_std_dev: se_std,
        served,
        missing: false,
    }
}

fn assemble(cfg: &SimConfig, reps: Vec<RepResult>) -> SimulationEstimate {
    let cycle_begin: Vec<(f64, f64, u64)> = reps
        .iter()
        .map(|r| {
            (
                r.cycle_begin.mean(),
                r.cycle_begin.second(),
                r.cycle_begin.n,
            )
        })
        .collect();
    let cycle_complete: Vec<(f64, f64, u64)> = reps
        .iter()
        .map(|r| {
            (
                r.cycle_complete.mean(),
                r.cycle_complete.second(),
                r.cycle_complete.n,
            )
        })
        .collect();
    let intervisit: Vec<(f64, f64, u64)> = reps
        .iter()
        .map(|r| (r.intervisit.mean(), r.intervisit.second(), r.intervisit.n))
        .collect();
    let at_poll: Vec<(f64, f64, u64)> = reps
        .iter()
        .map(|r| (r.q1_at_poll.mean(), r.q1_at_poll.second(), r.q1_at_poll.n))
        .collect();
    SimulationEstimate {
        high: aggregate_wait(&reps, 0),
        low: aggregate_wait(&reps, 1),
        queue2: aggregate_wait(&reps, 2),
        cycle_begin_q1: aggregate_moment(&cycle_begin),
        cycle_complete_q1: aggregate_moment(&cycle_complete),
        intervisit_q1: aggregate_moment(&intervisit),
        queue1_at_poll: aggregate_moment(&at_poll),
        seed: cfg.seed,
        replications: cfg.replications,
        warmup_customers: cfg.warmup_customers,
        measured_customers: cfg.measured_customers,
        low_precision: cfg.measured_customers < 10_000,
        empty: false,
    }
}

fn empty_estimate(cfg: &SimConfig) -> SimulationEstimate {
    let nan_wait = WaitEstimate {
        mean: f64::NAN,
        se_mean: f64::NAN,
        second_moment: f64::NAN,
        se_second_moment: f64::NAN,
        std_dev: f64::NAN,
        se_std_dev: f64::NAN,
        served: 0,
        missing: true,
    };
    let nan_moment = MomentEstimate {
        mean: f64::NAN,
        se_mean: f64::NAN,
        second_moment: f64::NAN,
        se_second_moment: f64::NAN,
        samples: 0,
    };
    SimulationEstimate {
        high: nan_wait,
        low: nan_wait,
        queue2: nan_wait,
        cycle_begin_q1: nan_moment,
        cycle_complete_q1: nan_moment,
        intervisit_q1: nan_moment,
        queue1_at_poll: nan_moment,
        seed: cfg.seed,
        replications: cfg.replications,
        warmup_customers: cfg.warmup_customers,
        measured_customers: cfg.measured_customers,
        low_precision: true,
        empty: true,
    }
}

/// Runs the configured replications and aggregates the estimates.
pub fn run(cfg: &SimConfig) -> Result<SimulationEstimate, SimError> {
    cfg.validate()?;
    if cfg.model.lambda_h + cfg.model.lambda_l + cfg.model.lambda_2 == 0.0 {
        return Ok(empty_estimate(cfg));
    }
    let reps: Vec<RepResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            Replication::<std::io::Sink>::new(
                &cfg.model,
                cfg.preemptive_high,
                replication_seed(cfg.seed, rep),
                cfg.warmup_customers,
                cfg.measured_customers,
                None,
            )
            .run()
        })
        .collect();
    Ok(assemble(cfg, reps))
}

/// Cycle and intervisit estimates (shorthand view of [`run`]).
pub fn estimate_cycles(
    cfg: &SimConfig,
) -> Result<(MomentEstimate, MomentEstimate, MomentEstimate), SimError> {
    let est = run(cfg)?;
    Ok((est.cycle_begin_q1, est.cycle_complete_q1, est.intervisit_q1))
}

/// Runs a single replication (replication 0 of `cfg`) writing the event log
/// as `time,event,queue,class,customer_id` lines.
pub fn run_with_event_log<W: Write>(cfg: &SimConfig, sink: &mut W) -> Result<(), SimError> {
    cfg.validate()?;
    if cfg.model.lambda_h + cfg.model.lambda_l + cfg.model.lambda_2 == 0.0 {
        return Ok(());
    }
    Replication::new(
        &cfg.model,
        cfg.preemptive_high,
        replication_seed(cfg.seed, 0),
        cfg.warmup_customers,
        cfg.measured_customers,
        Some(sink),
    )
    .run();
    Ok(())
}

/// One line of an analysis-vs-simulation comparison.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyRow {
    pub quantity: String,
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
    pub skipped: bool,
}

/// Result of [`compare`]: per-quantity z-scores, passing when every
/// non-skipped |z| stays below 4.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyTable {
    pub rows: Vec<DiscrepancyRow>,
    pub pass: bool,
}

impl std::fmt::Display for DiscrepancyTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<12} {:>14} {:>14} {:>12} {:>8}  verdict",
            "quantity", "analytic", "simulated", "std error", "z"
        )?;
        for r in &self.rows {
            let verdict = if r.skipped {
                "skipped"
            } else if r.pass {
                "pass"
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "{:<12} {:>14.6} {:>14.6} {:>12.3e} {:>8.2}  {verdict}",
                r.quantity, r.analytic, r.simulated, r.std_error, r.z
            )?;
        }
        write!(f, "overall: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

fn discrepancy_row(quantity: &str, analytic: f64, simulated: f64, se: f64) -> DiscrepancyRow {
    if !simulated.is_finite() || !se.is_finite() || se <= 0.0 {
        return DiscrepancyRow {
            quantity: quantity.into(),
            analytic,
            simulated,
            std_error: se,
            z: f64::NAN,
            pass: true,
            skipped: true,
        };
    }
    let z = (simulated - analytic) / se;
    DiscrepancyRow {
        quantity: quantity.into(),
        analytic,
        simulated,
        std_error: se,
        z,
        pass: z.abs() < 4.0,
        skipped: false,
    }
}

/// Runs the simulator and scores it against an analytic report: per-quantity
/// z-scores `|analytic - simulated| / SE`, passing iff all `|z| < 4`.
/// Quantities without observations (zero-rate classes) are skipped.
pub fn compare(cfg: &SimConfig, report: &PerformanceReport) -> Result<DiscrepancyTable, SimError> {
    let est = run(cfg)?;
    let mut rows = Vec::new();
    rows.push(discrepancy_row(
        "E(W_H)",
        report.high.mean_wait,
        est.high.mean,
        est.high.se_mean,
    ));
    rows.push(discrepancy_row(
        "E(W_L)",
        report.low.mean_wait,
        est.low.mean,
        est.low.se_mean,
    ));
    if let Some(q2) = &report.queue2 {
        rows.push(discrepancy_row(
            "E(W_2)",
            q2.mean_wait,
            est.queue2.mean,
            est.queue2.se_mean,
        ));
    }
    rows.push(discrepancy_row(
        "sd(W_H)",
        report.high.std_wait,
        est.high.std_dev,
        est.high.se_std_dev,
    ));
    rows.push(discrepancy_row(
        "sd(W_L)",
        report.low.std_wait,
        est.low.std_dev,
        est.low.se_std_dev,
    ));
    rows.push(discrepancy_row(
        "E(C)",
        report.derived.mean_cycle,
        est.cycle_begin_q1.mean,
        est.cycle_begin_q1.se_mean,
    ));
    rows.push(discrepancy_row(
        "E(I_1)",
        report.derived.mean_intervisit_q1,
        est.intervisit_q1.mean,
        est.intervisit_q1.se_mean,
    ));
    let pass = rows.iter().all(|r| r.pass);
    Ok(DiscrepancyTable { rows, pass })
}
