//! KKT certification of dispatch solutions and the suboptimality bound for
//! steps that charge and discharge at once.
//!
//! Everything here works from named multipliers (`Multipliers`), never from
//! raw LP row positions, so a change in row emission order cannot make a
//! wrong pairing pass silently.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{constraint_violations, DecisionTrajectory, EssParams, ExogenousProfile, Tariff};
use crate::problem::{extract_trajectory, ConstraintIndex, ConstraintKind, LpStandardForm, RowRef};
use crate::scalar::{max_of, pos, Scalar};
use crate::solver::SolveOutcome;

/// Lagrange multipliers keyed by constraint family, one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers<T> {
    /// `None` when export is allowed and the grid floor does not exist.
    pub grid_lower: Option<Vec<T>>,
    pub ch_lower: Vec<T>,
    pub ch_upper: Vec<T>,
    pub dis_lower: Vec<T>,
    pub dis_upper: Vec<T>,
    pub soc_lower: Vec<T>,
    pub soc_upper: Vec<T>,
    pub sol_lower: Vec<T>,
    pub sol_upper: Vec<T>,
    pub balance: Vec<T>,
}

impl<T: Scalar> Multipliers<T> {
    pub fn zeros(n: usize, net_metering: bool) -> Self {
        let z = vec![T::zero(); n];
        Self {
            grid_lower: (!net_metering).then(|| z.clone()),
            ch_lower: z.clone(),
            ch_upper: z.clone(),
            dis_lower: z.clone(),
            dis_upper: z.clone(),
            soc_lower: z.clone(),
            soc_upper: z.clone(),
            sol_lower: z.clone(),
            sol_upper: z.clone(),
            balance: z,
        }
    }

    pub fn len(&self) -> usize {
        self.balance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balance.is_empty()
    }

    /// Reads every multiplier of an optimal outcome through the index.
    pub fn from_outcome(outcome: &SolveOutcome<T>, index: &ConstraintIndex) -> Result<Self> {
        if !outcome.is_optimal() {
            return Err(Error::NotOptimal);
        }
        let n = index.horizon();
        let mut m = Self::zeros(n, index.net_metering());
        for kind in ConstraintKind::INEQUALITIES.into_iter().chain([ConstraintKind::Balance]) {
            if kind == ConstraintKind::GridLower && index.net_metering() {
                continue;
            }
            for t in 0..n {
                let v = match index.row(kind, t) {
                    Some(RowRef::Ineq(i)) => outcome.ineq_duals.get(i).copied(),
                    Some(RowRef::Eq(i)) => outcome.eq_duals.get(i).copied(),
                    None => None,
                }
                .ok_or(Error::MissingConstraint { kind, step: t })?;
                *m.slot_mut(kind, t)? = v;
            }
        }
        Ok(m)
    }

    pub fn get(&self, kind: ConstraintKind, t: usize) -> Option<T> {
        let v = match kind {
            ConstraintKind::GridLower => self.grid_lower.as_ref()?,
            ConstraintKind::ChLower => &self.ch_lower,
            ConstraintKind::ChUpper => &self.ch_upper,
            ConstraintKind::DisLower => &self.dis_lower,
            ConstraintKind::DisUpper => &self.dis_upper,
            ConstraintKind::SocLower => &self.soc_lower,
            ConstraintKind::SocUpper => &self.soc_upper,
            ConstraintKind::SolLower => &self.sol_lower,
            ConstraintKind::SolUpper => &self.sol_upper,
            ConstraintKind::Balance => &self.balance,
        };
        v.get(t).copied()
    }

    pub fn slot_mut(&mut self, kind: ConstraintKind, t: usize) -> Result<&mut T> {
        let missing = Error::MissingConstraint { kind, step: t };
        let v = match kind {
            ConstraintKind::GridLower => self.grid_lower.as_mut().ok_or(missing)?,
            ConstraintKind::ChLower => &mut self.ch_lower,
            ConstraintKind::ChUpper => &mut self.ch_upper,
            ConstraintKind::DisLower => &mut self.dis_lower,
            ConstraintKind::DisUpper => &mut self.dis_upper,
            ConstraintKind::SocLower => &mut self.soc_lower,
            ConstraintKind::SocUpper => &mut self.soc_upper,
            ConstraintKind::SolLower => &mut self.sol_lower,
            ConstraintKind::SolUpper => &mut self.sol_upper,
            ConstraintKind::Balance => &mut self.balance,
        };
        let len = v.len();
        v.get_mut(t).ok_or(Error::LengthMismatch {
            what: "multipliers",
            expected: t + 1,
            got: len,
        })
    }

    /// `sum_{n >= t} (soc_upper[n] - soc_lower[n])` for every `t`.
    pub fn soc_tail_sums(&self) -> Vec<T> {
        let n = self.len();
        let mut out = vec![T::zero(); n];
        let mut acc = T::zero();
        for t in (0..n).rev() {
            acc = acc + self.soc_upper[t] - self.soc_lower[t];
            out[t] = acc;
        }
        out
    }
}

/// Stationarity residuals of one step, one per variable family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStationarity<T> {
    pub grid: T,
    pub ch: T,
    pub dis: T,
    pub curt: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRecord {
    pub group: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport<T> {
    pub primal_feasibility: T,
    pub dual_feasibility: T,
    pub complementary_slackness: T,
    pub stationarity_grid: T,
    pub stationarity_ch: T,
    pub stationarity_dis: T,
    pub stationarity_curt: T,
    /// Signed per-step stationarity residuals.
    pub per_step: Vec<StepStationarity<T>>,
    /// `sum_{n >= t} (soc_upper - soc_lower)` per step.
    pub soc_tail_sums: Vec<T>,
    /// Pass threshold, `tol * (1 + data_norm)`.
    pub threshold: T,
    pub passed: bool,
}

impl<T: Scalar> KktReport<T> {
    /// Group records in the order primal, dual, slackness, stationarity.
    pub fn groups(&self) -> Vec<GroupRecord> {
        let th = self.threshold.as_f64();
        [
            ("primal_feasibility", self.primal_feasibility),
            ("dual_feasibility", self.dual_feasibility),
            ("complementary_slackness", self.complementary_slackness),
            ("stationarity_grid", self.stationarity_grid),
            ("stationarity_ch", self.stationarity_ch),
            ("stationarity_dis", self.stationarity_dis),
            ("stationarity_curt", self.stationarity_curt),
        ]
        .into_iter()
        .map(|(group, r)| GroupRecord {
            group,
            residual: r.as_f64(),
            threshold: th,
            pass: r <= self.threshold,
        })
        .collect()
    }

    pub fn max_residual(&self) -> T {
        max_of([
            self.primal_feasibility,
            self.dual_feasibility,
            self.complementary_slackness,
            self.stationarity_grid,
            self.stationarity_ch,
            self.stationarity_dis,
            self.stationarity_curt,
        ])
    }
}

/// KKT check of an optimal solver outcome.
pub fn check<T: Scalar>(
    lp: &LpStandardForm<T>,
    index: &ConstraintIndex,
    outcome: &SolveOutcome<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
) -> Result<KktReport<T>> {
    let mult = Multipliers::from_outcome(outcome, index)?;
    let x = extract_trajectory(&outcome.primal, index.horizon())?;
    check_pair(&x, &mult, params, prof, tariff, tol, lp.data_norm())
}

/// KKT check of an arbitrary primal trajectory and multiplier set.
///
/// `data_norm` scales the pass threshold; pass `T::zero()` for an absolute
/// tolerance.
pub fn check_pair<T: Scalar>(
    x: &DecisionTrajectory<T>,
    mult: &Multipliers<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
    data_norm: T,
) -> Result<KktReport<T>> {
    let n = crate::model::check_lengths(x, prof, tariff)?;
    if mult.len() != n {
        return Err(Error::LengthMismatch {
            what: "multipliers",
            expected: n,
            got: mult.len(),
        });
    }
    if mult.grid_lower.is_some() == tariff.net_metering {
        return Err(Error::MissingConstraint {
            kind: ConstraintKind::GridLower,
            step: 0,
        });
    }

    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut slack = T::zero();
    for (kind, t, f) in constraint_violations(x, params, prof, tariff.net_metering) {
        if kind.is_equality() {
            primal = primal.max(f);
            continue;
        }
        primal = primal.max(pos(f));
        let lam = mult.get(kind, t).ok_or(Error::MissingConstraint { kind, step: t })?;
        dual = dual.max(pos(-lam));
        slack = slack.max((lam * f).abs());
    }

    let tails = mult.soc_tail_sums();
    let (ec, ed, dt) = (params.eta_c, params.eta_d, params.dt);
    let per_step: Vec<StepStationarity<T>> = (0..n)
        .map(|t| {
            let mu = mult.balance[t];
            let grid_floor = mult.grid_lower.as_ref().map_or(T::zero(), |g| g[t]);
            StepStationarity {
                grid: tariff.price(t) - grid_floor - mu,
                ch: tariff.charge_penalty() - mult.ch_lower[t] + mult.ch_upper[t] + ec * dt * tails[t] + mu,
                dis: tariff.discharge_penalty() - mult.dis_lower[t] + mult.dis_upper[t] - ed * dt * tails[t] - mu,
                curt: -mult.sol_lower[t] + mult.sol_upper[t] + mu,
            }
        })
        .collect();
    let family = |f: fn(&StepStationarity<T>) -> T| max_of(per_step.iter().map(|s| f(s).abs()));
    let threshold = tol * (T::one() + data_norm);
    let mut report = KktReport {
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementary_slackness: slack,
        stationarity_grid: family(|s| s.grid),
        stationarity_ch: family(|s| s.ch),
        stationarity_dis: family(|s| s.dis),
        stationarity_curt: family(|s| s.curt),
        per_step,
        soc_tail_sums: tails,
        threshold,
        passed: false,
    };
    report.passed = report.max_residual() <= threshold;
    Ok(report)
}

/// Which argument the certificate at a simultaneous step rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateCase {
    /// Grid import is positive; the balance multiplier equals the price.
    GridImport,
    /// Export allowed; the balance multiplier equals the price.
    NetMetering,
    /// No import and curtailment strictly inside its box; the balance
    /// multiplier equals the curtailment-floor multiplier.
    InteriorCurtailment,
    /// No import and all solar curtailed. Only a primal argument applies;
    /// the bound carries the raw balance multiplier and may be negative.
    FullCurtailment,
}

/// Lower bound on the quantity that must vanish at a KKT point with
/// simultaneous charging and discharging. Positive means the point cannot
/// be optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate<T> {
    pub step: usize,
    pub case: CertificateCase,
    /// `beta + (eta_d/eta_c) alpha`
    pub penalty_term: T,
    /// Discharge-cap multiplier.
    pub dis_upper_term: T,
    /// `(eta_d/eta_c)` times the charge-cap multiplier.
    pub ch_upper_term: T,
    /// `(eta_d/eta_c - 1)` times the balance-multiplier stand-in.
    pub price_term: T,
    pub lower_bound: T,
}

impl<T: Scalar> Certificate<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn from_terms(
        step: usize,
        case: CertificateCase,
        params: &EssParams<T>,
        alpha: T,
        beta: T,
        dis_upper: T,
        ch_upper: T,
        mu_term: T,
    ) -> Self {
        let r = params.efficiency_ratio();
        let penalty_term = beta + r * alpha;
        let dis_upper_term = dis_upper;
        let ch_upper_term = r * ch_upper;
        let price_term = (r - T::one()) * mu_term;
        Self {
            step,
            case,
            penalty_term,
            dis_upper_term,
            ch_upper_term,
            price_term,
            lower_bound: penalty_term + dis_upper_term + ch_upper_term + price_term,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.lower_bound > T::zero()
    }
}

/// Certificate for simultaneous step `step` of an optimal outcome.
pub fn certificate_of_suboptimality<T: Scalar>(
    step: usize,
    outcome: &SolveOutcome<T>,
    index: &ConstraintIndex,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
) -> Result<Certificate<T>> {
    let x = extract_trajectory(&outcome.primal, index.horizon())?;
    let mult = Multipliers::from_outcome(outcome, index)?;
    certificate_for_point(step, &x, &mult, params, prof, tariff, tol)
}

/// Certificate for a trajectory and a multiplier set supplied by the caller.
pub fn certificate_for_point<T: Scalar>(
    step: usize,
    x: &DecisionTrajectory<T>,
    mult: &Multipliers<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
) -> Result<Certificate<T>> {
    crate::model::check_lengths(x, prof, tariff)?;
    if step >= x.len() || x.p_ch[step].min(x.p_dis[step]) <= tol {
        return Err(Error::NoSimultaneity(step));
    }
    let (case, mu_term) = if tariff.net_metering {
        (CertificateCase::NetMetering, tariff.price(step))
    } else if x.p_grid[step] > tol {
        (CertificateCase::GridImport, tariff.price(step))
    } else if x.p_c[step] < prof.p_sol[step] - tol {
        (CertificateCase::InteriorCurtailment, mult.sol_lower[step])
    } else {
        (CertificateCase::FullCurtailment, mult.balance[step])
    };
    Ok(Certificate::from_terms(
        step,
        case,
        params,
        tariff.charge_penalty(),
        tariff.discharge_penalty(),
        mult.dis_upper[step],
        mult.ch_upper[step],
        mu_term,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    NonSimultaneous,
    SimultaneousPossible,
}

/// Row of the regime table (1-based) and its expected behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub row: u8,
    pub behavior: Behavior,
}

/// Maps penalties, price positivity and export policy to the regime table.
pub fn classify_regime<T: Scalar>(tariff: &Tariff<T>) -> Regime {
    let penalized = tariff.alpha + tariff.beta > T::zero();
    let prices_positive = tariff.c_e.iter().all(|&c| c > T::zero());
    let (row, behavior) = match (tariff.net_metering, penalized, prices_positive) {
        (true, _, true) => (1, Behavior::NonSimultaneous),
        (true, true, false) => (2, Behavior::NonSimultaneous),
        (true, false, false) => (3, Behavior::SimultaneousPossible),
        (false, true, _) => (4, Behavior::NonSimultaneous),
        (false, false, _) => (5, Behavior::SimultaneousPossible),
    };
    Regime { row, behavior }
}
