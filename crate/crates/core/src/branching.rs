//! Every transform attached to a polling model: offspring and immigration
//! PGFs of the induced multitype branching process, the infinite-product
//! joint queue-length PGF at cycle start, joint PGFs at the other polling
//! epochs, cycle-time LSTs at all anchors, intervisit LSTs and the globally
//! gated switch-over product.
//!
//! One cycle maps the queue contents at a visit beginning to queue 1 onto the
//! next one: customers present there are replaced by i.i.d. populations
//! (offspring, PGFs `f`), and customers arriving during switch-over times
//! immigrate (PGF `g`). Iterating the offspring map and multiplying the
//! immigration values gives the stationary joint PGF
//! `P1(z) = prod_n g(f_n(z))`, which converges geometrically at rate `rho`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{DerivedQuantities, Discipline, PollingModel};
use crate::transforms::{busy_period_lst, FixedPointConfig, TransformError};

#[derive(Debug, Clone, Error)]
pub enum BranchingError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{operation} is not defined under {discipline} service")]
    DisciplineMismatch {
        operation: &'static str,
        discipline: Discipline,
    },
    #[error(
        "infinite product needed more than {max_terms} terms \
         (partial value {partial}, last term gap {last_gap:e})"
    )]
    ProductDiverged {
        max_terms: usize,
        partial: f64,
        last_gap: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Truncation policy for the infinite products.
///
/// A product is cut off once the current factor is within `epsilon` of 1; the
/// factors approach 1 geometrically at rate `rho`, so the discarded tail is
/// of order `epsilon * rho / (1 - rho)`.
#[derive(Debug, Clone, Copy)]
pub struct ProductTruncation {
    pub epsilon: f64,
    pub max_terms: usize,
}

impl Default for ProductTruncation {
    fn default() -> Self {
        Self {
            epsilon: 1e-14,
            max_terms: 100_000,
        }
    }
}

/// Where a cycle starts. The mean cycle length is anchor-independent; higher
/// moments are not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CycleAnchor {
    /// Beginning of a visit to queue 1 (the default cycle start).
    VisitBeginningQ1,
    /// Completion of a visit to queue 1 (natural under exhaustive service).
    VisitCompletionQ1,
    /// Beginning of a visit to queue 2.
    VisitBeginningQ2,
    /// Completion of a visit to queue 2.
    VisitCompletionQ2,
}

/// Offspring and immigration components at one point of the unit square.
#[derive(Debug, Clone, Copy)]
pub struct ComponentPgfs {
    /// Per-visit replacement PGF of one queue-1 customer.
    pub h1: f64,
    /// Per-visit replacement PGF of one queue-2 customer.
    pub h2: f64,
    /// Offspring map, first coordinate.
    pub f1: f64,
    /// Offspring map, second coordinate.
    pub f2: f64,
    /// Immigration during the switch from queue 1 to queue 2.
    pub g1: f64,
    /// Immigration during the switch from queue 2 to queue 1.
    pub g2: f64,
    /// Total immigration `g1 * g2`.
    pub g: f64,
}

/// Joint queue-length PGFs at the four polling epochs.
#[derive(Debug, Clone, Copy)]
pub struct VisitPgfs {
    pub begin_q1: f64,
    pub begin_q2: f64,
    pub complete_q1: f64,
    pub complete_q2: f64,
}

/// Small tolerance for PGF arguments: moment extraction probes transforms a
/// hair outside `[0, 1]`, where the branching iterates still contract.
const UNIT_MARGIN: f64 = 0.05;

/// Evaluator for all transforms of one model. Immutable and shareable;
/// every method is reentrant.
#[derive(Debug, Clone)]
pub struct ModelTransforms {
    model: PollingModel,
    derived: DerivedQuantities,
    fixed_point: FixedPointConfig,
    truncation: ProductTruncation,
}

impl ModelTransforms {
    pub fn new(model: PollingModel) -> Result<Self, BranchingError> {
        Self::with_configs(
            model,
            FixedPointConfig::default(),
            ProductTruncation::default(),
        )
    }

    pub fn with_configs(
        model: PollingModel,
        fixed_point: FixedPointConfig,
        truncation: ProductTruncation,
    ) -> Result<Self, BranchingError> {
        let violations = model.validate();
        if !violations.is_empty() {
            let text = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(BranchingError::InvalidModel(text));
        }
        let derived = model.derive();
        Ok(Self {
            model,
            derived,
            fixed_point,
            truncation,
        })
    }

    pub fn model(&self) -> &PollingModel {
        &self.model
    }

    pub fn derived(&self) -> &DerivedQuantities {
        &self.derived
    }

    // ----- service, switch-over and busy-period transforms -----

    pub fn beta_h(&self, w: f64) -> f64 {
        self.model.service_h.lst(w)
    }

    pub fn beta_l(&self, w: f64) -> f64 {
        self.model.service_l.lst(w)
    }

    pub fn beta_1(&self, w: f64) -> f64 {
        self.model.beta_1(w)
    }

    pub fn beta_2(&self, w: f64) -> f64 {
        self.model.service_2.lst(w)
    }

    pub fn sigma_1(&self, w: f64) -> f64 {
        self.model.switch_1.lst(w)
    }

    pub fn sigma_2(&self, w: f64) -> f64 {
        self.model.switch_2.lst(w)
    }

    /// Busy-period LST of the aggregate queue-1 class.
    pub fn pi_1(&self, w: f64) -> Result<f64, BranchingError> {
        Ok(busy_period_lst(
            |s| self.beta_1(s),
            self.model.lambda_1(),
            w,
            &self.fixed_point,
        )?)
    }

    /// Busy-period LST of the high priority class alone.
    pub fn pi_h(&self, w: f64) -> Result<f64, BranchingError> {
        Ok(busy_period_lst(
            |s| self.beta_h(s),
            self.model.lambda_h,
            w,
            &self.fixed_point,
        )?)
    }

    /// Busy-period LST of queue 2.
    pub fn pi_2(&self, w: f64) -> Result<f64, BranchingError> {
        Ok(busy_period_lst(
            |s| self.beta_2(s),
            self.model.lambda_2,
            w,
            &self.fixed_point,
        )?)
    }

    /// LST of the time the server spends at queue 1 on behalf of one customer
    /// present there: the service time under gated-style service, a full busy
    /// period under exhaustive service.
    pub fn phi_1(&self, w: f64) -> Result<f64, BranchingError> {
        match self.model.discipline {
            Discipline::Exhaustive => self.pi_1(w),
            _ => Ok(self.beta_1(w)),
        }
    }

    /// Queue-2 counterpart of [`phi_1`](Self::phi_1).
    pub fn phi_2(&self, w: f64) -> Result<f64, BranchingError> {
        match self.model.discipline {
            Discipline::Exhaustive => self.pi_2(w),
            _ => Ok(self.beta_2(w)),
        }
    }

    fn h1(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        let m = &self.model;
        match m.discipline {
            Discipline::Exhaustive => self.pi_1(m.lambda_2 * (1.0 - z2)),
            _ => Ok(self.beta_1(m.lambda_1() * (1.0 - z1) + m.lambda_2 * (1.0 - z2))),
        }
    }

    fn h2(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        let m = &self.model;
        match m.discipline {
            Discipline::Exhaustive => self.pi_2(m.lambda_1() * (1.0 - z1)),
            _ => Ok(self.beta_2(m.lambda_1() * (1.0 - z1) + m.lambda_2 * (1.0 - z2))),
        }
    }

    /// Offspring components, immigration components and their product at one
    /// point. Offspring under gated and exhaustive service compose through
    /// `h2` because queue-2 customers arriving during the visit to queue 1
    /// are themselves served before the cycle ends; under globally gated
    /// service nothing arriving after the cycle gate is served, so the maps
    /// do not compose.
    pub fn component_pgfs(&self, z1: f64, z2: f64) -> Result<ComponentPgfs, BranchingError> {
        check_unit("z1", z1)?;
        check_unit("z2", z2)?;
        let m = &self.model;
        let (l1, l2) = (m.lambda_1(), m.lambda_2);
        let h1 = self.h1(z1, z2)?;
        let h2 = self.h2(z1, z2)?;
        let (f1, f2, g1) = match m.discipline {
            Discipline::GloballyGated => {
                let u = l1 * (1.0 - z1) + l2 * (1.0 - z2);
                (h1, h2, self.sigma_1(u))
            }
            _ => (
                self.h1(z1, h2)?,
                h2,
                self.sigma_1(l1 * (1.0 - z1) + l2 * (1.0 - h2)),
            ),
        };
        let g2 = self.sigma_2(l1 * (1.0 - z1) + l2 * (1.0 - z2));
        Ok(ComponentPgfs {
            h1,
            h2,
            f1,
            f2,
            g1,
            g2,
            g: g1 * g2,
        })
    }

    fn p1_product(&self, z1: f64, z2: f64) -> Result<(f64, usize), BranchingError> {
        let eps = self.truncation.epsilon;
        let (mut z1, mut z2) = (z1, z2);
        let mut product = 1.0f64;
        let mut last_gap = f64::INFINITY;
        for n in 0..self.truncation.max_terms {
            let c = self.component_pgfs(z1, z2)?;
            product *= c.g;
            last_gap = (1.0 - c.g).abs();
            if last_gap < eps {
                return Ok((product, n + 1));
            }
            z1 = c.f1;
            z2 = c.f2;
        }
        Err(BranchingError::ProductDiverged {
            max_terms: self.truncation.max_terms,
            partial: product,
            last_gap,
        })
    }

    /// Joint queue-length PGF at the beginning of a visit to queue 1, as the
    /// infinite immigration product over offspring iterates.
    pub fn p1_eval(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        Ok(self.p1_product(z1, z2)?.0)
    }

    /// Number of product terms consumed at a point.
    pub fn p1_term_count(&self, z1: f64, z2: f64) -> Result<usize, BranchingError> {
        Ok(self.p1_product(z1, z2)?.1)
    }

    /// Three-argument joint PGF with the first queue split by priority class:
    /// high and low priority counts collapse binomially to the aggregate,
    /// `P1(zh, zl, z2) = P1((lambda_h zh + lambda_l zl) / lambda_1, z2)`.
    pub fn p1_priority_eval(&self, zh: f64, zl: f64, z2: f64) -> Result<f64, BranchingError> {
        check_unit("zh", zh)?;
        check_unit("zl", zl)?;
        let m = &self.model;
        let zc = (m.lambda_h * zh + m.lambda_l * zl) / m.lambda_1();
        self.p1_eval(zc, z2)
    }

    fn visit_completion_q1(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        let h1 = self.h1(z1, z2)?;
        self.p1_eval(h1, z2)
    }

    fn visit_beginning_q2(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        let m = &self.model;
        let vc1 = self.visit_completion_q1(z1, z2)?;
        Ok(vc1 * self.sigma_1(m.lambda_1() * (1.0 - z1) + m.lambda_2 * (1.0 - z2)))
    }

    fn visit_completion_q2(&self, z1: f64, z2: f64) -> Result<f64, BranchingError> {
        let h2 = self.h2(z1, z2)?;
        self.visit_beginning_q2(z1, h2)
    }

    /// Joint queue-length PGFs at visit beginnings and completions of both
    /// queues, chained from `P1` through the per-epoch relations. Not defined
    /// under globally gated service, whose epochs are not of branching type.
    pub fn visit_pgfs(&self, z1: f64, z2: f64) -> Result<VisitPgfs, BranchingError> {
        if self.model.discipline == Discipline::GloballyGated {
            return Err(BranchingError::DisciplineMismatch {
                operation: "visit_pgfs",
                discipline: self.model.discipline,
            });
        }
        check_unit("z1", z1)?;
        check_unit("z2", z2)?;
        Ok(VisitPgfs {
            begin_q1: self.p1_eval(z1, z2)?,
            begin_q2: self.visit_beginning_q2(z1, z2)?,
            complete_q1: self.visit_completion_q1(z1, z2)?,
            complete_q2: self.visit_completion_q2(z1, z2)?,
        })
    }

    // ----- cycle-time LSTs -----

    /// Cycle-time LST at the given anchor.
    ///
    /// Uses the compact single-product expression where the discipline
    /// provides one and its PGF argument stays inside the unit interval,
    /// otherwise the general composition over switch-over transforms and the
    /// appropriate epoch PGF. Globally gated cycles are only anchored at the
    /// beginning of a visit to queue 1 (the cycle gate).
    pub fn cycle_lst(&self, w: f64, anchor: CycleAnchor) -> Result<f64, BranchingError> {
        if self.model.discipline == Discipline::GloballyGated {
            return match anchor {
                CycleAnchor::VisitBeginningQ1 => self.gg_cycle_lst(w),
                _ => Err(BranchingError::DisciplineMismatch {
                    operation: "cycle_lst at a non-cycle-gate anchor",
                    discipline: self.model.discipline,
                }),
            };
        }
        match self.cycle_lst_shortcut(w, anchor) {
            Ok(v) => Ok(v),
            Err(BranchingError::Domain(_)) => self.cycle_lst_general(w, anchor),
            Err(e) => Err(e),
        }
    }

    /// Compact discipline-specific cycle LSTs: under gated service customers
    /// at a polling epoch are exactly those that arrived during the previous
    /// cycle (so the cycle transform is a section of `P1`); under exhaustive
    /// service the completion-anchored cycle is a section of `P1` shifted by
    /// a busy period. Errors with a domain error when the anchor has no
    /// shortcut or the PGF argument leaves the unit interval; the general
    /// composition in [`cycle_lst`](Self::cycle_lst) covers those cases.
    pub fn cycle_lst_shortcut(&self, w: f64, anchor: CycleAnchor) -> Result<f64, BranchingError> {
        let m = &self.model;
        let (l1, l2) = (m.lambda_1(), m.lambda_2);
        match (m.discipline, anchor) {
            (Discipline::Gated, CycleAnchor::VisitBeginningQ1) => {
                let z = 1.0 - w / l1;
                check_shortcut_arg(z)?;
                self.p1_eval(z, 1.0)
            }
            (Discipline::Gated, CycleAnchor::VisitBeginningQ2) => {
                if l2 == 0.0 {
                    return Err(BranchingError::Domain(
                        "queue-2 cycle section needs a positive arrival rate".into(),
                    ));
                }
                let z = 1.0 - w / l2;
                check_shortcut_arg(z)?;
                self.visit_beginning_q2(1.0, z)
            }
            (Discipline::Exhaustive, CycleAnchor::VisitCompletionQ1) => {
                let z = self.pi_1(w)? - w / l1;
                check_shortcut_arg(z)?;
                self.p1_eval(z, 1.0)
            }
            (Discipline::Exhaustive, CycleAnchor::VisitCompletionQ2) => {
                if l2 == 0.0 {
                    return Err(BranchingError::Domain(
                        "queue-2 cycle section needs a positive arrival rate".into(),
                    ));
                }
                let z = self.pi_2(w)? - w / l2;
                check_shortcut_arg(z)?;
                self.visit_beginning_q2(1.0, z)
            }
            _ => Err(BranchingError::Domain(format!(
                "no shortcut for anchor {anchor:?} under {} service",
                m.discipline
            ))),
        }
    }

    /// General compositional cycle LSTs, valid for any branching-type
    /// discipline and every `w >= 0`. Queue-1 customers arriving anywhere in
    /// a completion-anchored cycle are still served within it, so every
    /// factor of those forms carries the corresponding busy shift.
    pub fn cycle_lst_general(&self, w: f64, anchor: CycleAnchor) -> Result<f64, BranchingError> {
        if self.model.discipline == Discipline::GloballyGated {
            return Err(BranchingError::DisciplineMismatch {
                operation: "cycle_lst_general",
                discipline: self.model.discipline,
            });
        }
        let m = &self.model;
        let (l1, l2) = (m.lambda_1(), m.lambda_2);
        match anchor {
            CycleAnchor::VisitBeginningQ1 => {
                let p2 = self.phi_2(w)?;
                let shifted = w + l2 * (1.0 - p2);
                let p1 = self.phi_1(shifted)?;
                Ok(self.sigma_1(shifted) * self.sigma_2(w) * self.p1_eval(p1, p2)?)
            }
            CycleAnchor::VisitCompletionQ1 => {
                let p1 = self.phi_1(w)?;
                let a = w + l1 * (1.0 - p1);
                let p2 = self.phi_2(a)?;
                let vc1 = self.visit_completion_q1(p1, p2)?;
                Ok(self.sigma_1(a + l2 * (1.0 - p2)) * self.sigma_2(a) * vc1)
            }
            CycleAnchor::VisitBeginningQ2 => {
                let p1 = self.phi_1(w)?;
                let a = w + l1 * (1.0 - p1);
                let p2 = self.phi_2(a)?;
                let vb2 = self.visit_beginning_q2(p1, p2)?;
                Ok(self.sigma_2(a) * self.sigma_1(w) * vb2)
            }
            CycleAnchor::VisitCompletionQ2 => {
                let p2 = self.phi_2(w)?;
                let a = w + l2 * (1.0 - p2);
                let p1 = self.phi_1(a)?;
                let vc2 = self.visit_completion_q2(p1, p2)?;
                Ok(self.sigma_2(a + l1 * (1.0 - p1)) * self.sigma_1(a) * vc2)
            }
        }
    }

    // ----- globally gated -----

    /// One-cycle workload contraction of the globally gated system:
    /// `delta(w) = lambda_h (1 - beta_h(w)) + lambda_l (1 - beta_l(w))
    ///           + lambda_2 (1 - beta_2(w))`.
    pub fn gg_delta(&self, w: f64) -> f64 {
        let m = &self.model;
        m.lambda_h * (1.0 - self.beta_h(w))
            + m.lambda_l * (1.0 - self.beta_l(w))
            + m.lambda_2 * (1.0 - self.beta_2(w))
    }

    /// Globally gated cycle-time LST as the infinite switch-over product
    /// `prod_i sigma_1(delta^i(w)) sigma_2(delta^i(w))`; satisfies the
    /// functional equation `gamma(w) = sigma_1(w) sigma_2(w) gamma(delta(w))`.
    pub fn gg_cycle_lst(&self, w: f64) -> Result<f64, BranchingError> {
        if self.model.discipline != Discipline::GloballyGated {
            return Err(BranchingError::DisciplineMismatch {
                operation: "gg_cycle_lst",
                discipline: self.model.discipline,
            });
        }
        let eps = self.truncation.epsilon;
        let mut product = 1.0f64;
        let mut arg = w;
        let mut last_gap = f64::INFINITY;
        for _ in 0..self.truncation.max_terms {
            let s = self.sigma_1(arg) * self.sigma_2(arg);
            product *= s;
            last_gap = (1.0 - s).abs();
            if last_gap < eps {
                return Ok(product);
            }
            arg = self.gg_delta(arg);
        }
        Err(BranchingError::ProductDiverged {
            max_terms: self.truncation.max_terms,
            partial: product,
            last_gap,
        })
    }

    // ----- intervisit and completion-time transforms (exhaustive) -----

    /// Intervisit-time LST for queue 1 under exhaustive service. With
    /// `extended` the intervisit is prolonged by the high priority work
    /// arriving during it and all its high priority descendants.
    ///
    /// For `w <= lambda_1` this is the section `P1(1 - w/lambda_1, 1)`;
    /// beyond that the inverse of the busy-period relation with the
    /// completion-anchored cycle takes over.
    pub fn intervisit_lst(&self, w: f64, extended: bool) -> Result<f64, BranchingError> {
        self.require_exhaustive("intervisit_lst")?;
        if extended {
            let m = &self.model;
            let shifted = w + m.lambda_h * (1.0 - self.pi_h(w)?);
            return self.intervisit_base(shifted);
        }
        self.intervisit_base(w)
    }

    fn intervisit_base(&self, w: f64) -> Result<f64, BranchingError> {
        let l1 = self.model.lambda_1();
        // The section argument 1 - w/lambda_1 amplifies excursions by
        // 1/lambda_1; outside [0, lambda_1] the busy-period relation with the
        // completion-anchored cycle is the well-conditioned route.
        if (0.0..=l1).contains(&w) {
            self.p1_eval(1.0 - w / l1, 1.0)
        } else {
            let arg = w - l1 * (1.0 - self.beta_1(w));
            self.cycle_lst(arg, CycleAnchor::VisitCompletionQ1)
        }
    }

    /// Intervisit-time LST for queue 2 under exhaustive service.
    pub fn intervisit_lst_q2(&self, w: f64) -> Result<f64, BranchingError> {
        self.require_exhaustive("intervisit_lst_q2")?;
        let l2 = self.model.lambda_2;
        if l2 == 0.0 {
            return Err(BranchingError::Domain(
                "queue-2 intervisit needs a positive arrival rate".into(),
            ));
        }
        if (0.0..=l2).contains(&w) {
            self.visit_beginning_q2(1.0, 1.0 - w / l2)
        } else {
            let arg = w - l2 * (1.0 - self.beta_2(w));
            self.cycle_lst(arg, CycleAnchor::VisitCompletionQ2)
        }
    }

    /// Completion-time LST of a low priority service: the service extended by
    /// all high priority arrivals during it and their high priority
    /// descendants, `beta_l(w + lambda_h (1 - pi_h(w)))`.
    pub fn completion_time_low_lst(&self, w: f64) -> Result<f64, BranchingError> {
        self.require_exhaustive("completion_time_low_lst")?;
        let m = &self.model;
        Ok(self.beta_l(w + m.lambda_h * (1.0 - self.pi_h(w)?)))
    }

    fn require_exhaustive(&self, operation: &'static str) -> Result<(), BranchingError> {
        if self.model.discipline != Discipline::Exhaustive {
            return Err(BranchingError::DisciplineMismatch {
                operation,
                discipline: self.model.discipline,
            });
        }
        Ok(())
    }
}

fn check_unit(name: &str, z: f64) -> Result<(), BranchingError> {
    if z.is_finite() && (-UNIT_MARGIN..=1.0 + UNIT_MARGIN).contains(&z) {
        Ok(())
    } else {
        Err(BranchingError::Domain(format!(
            "PGF argument {name} = {z} outside [0, 1]"
        )))
    }
}

fn check_shortcut_arg(z: f64) -> Result<(), BranchingError> {
    if z.is_finite() && (0.0..=1.0 + UNIT_MARGIN).contains(&z) {
        Ok(())
    } else {
        Err(BranchingError::Domain(format!(
            "shortcut PGF argument {z} outside [0, 1]; use the general form"
        )))
    }
}
