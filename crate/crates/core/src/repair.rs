//! Removal of simultaneous charging and discharging from feasible
//! trajectories without raising cost.
//!
//! A round targets the last simultaneous step `tau` and leaves it clean:
//!
//! 1. Local move at `tau`: lower charging by `x` and discharging by
//!    `(eta_c/eta_d) x`. The SOC path is unchanged; the freed power
//!    `x (1 - eta_c/eta_d)` is taken off grid import first, then curtailed.
//! 2. If import and spare solar run out first, `tau` has no import and full
//!    curtailment, so discharging covers the load and `p_dis >= p_ch`. Then
//!    charging is shifted onto the next later charging step (forwarding)
//!    until either `tau` stops charging or no later charging is left, after
//!    which the remaining overlap is netted out (terminal).
//!
//! Steps after `tau` never gain simultaneity and steps before it are never
//! touched, so the number of rounds is bounded by the horizon.

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_feasible, check_lengths, cost, simultaneity_index, DecisionTrajectory, EssParams, ExogenousProfile, Tariff};
use crate::scalar::{pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairCase {
    /// SOC-preserving reduction at `tau` with the surplus absorbed locally.
    Local,
    /// No later charging: replace the overlap at `tau` by its net discharge.
    Terminal,
    /// Shift part of the charging at `tau` onto the later step `t_star`.
    Forwarding,
}

/// How the freed power is split between import reduction and curtailment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SplitPolicy {
    #[default]
    GridFirst,
    CurtailmentFirst,
}

/// One applied transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepairPlan<T> {
    pub step: usize,
    pub case: RepairCase,
    pub t_star: Option<usize>,
    /// `p_dis - p_ch` at `tau` before the move.
    pub delta: T,
    /// Charging removed at `tau`.
    pub p: T,
    /// Grid import reduction.
    pub a: T,
    /// Curtailment increase.
    pub b: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairOutcome<T> {
    pub trajectory: DecisionTrajectory<T>,
    pub rounds: usize,
    pub cost_reduction: T,
    pub plans: Vec<RepairPlan<T>>,
    /// Total charging before the first round and after every round.
    pub total_charging: Vec<T>,
}

/// Last step with `min(p_ch, p_dis) > tol`.
pub fn detect<T: Scalar>(x: &DecisionTrajectory<T>, tol: T) -> Option<usize> {
    simultaneity_index(x).into_iter().rposition(|s| s > tol)
}

fn require_simultaneous<T: Scalar>(x: &DecisionTrajectory<T>, tau: usize, tol: T) -> Result<()> {
    if tau >= x.len() || x.p_ch[tau].min(x.p_dis[tau]) <= tol {
        Err(Error::NoSimultaneity(tau))
    } else {
        Ok(())
    }
}

fn split<T: Scalar>(need: T, grid_room: T, curt_room: T, policy: SplitPolicy) -> (T, T) {
    match policy {
        SplitPolicy::GridFirst => {
            let a = need.min(grid_room);
            (a, (need - a).min(curt_room))
        }
        SplitPolicy::CurtailmentFirst => {
            let b = need.min(curt_room);
            ((need - b).min(grid_room), b)
        }
    }
}

/// SOC-preserving reduction of the overlap at `tau`.
pub fn repair_local<T: Scalar>(
    x: &DecisionTrajectory<T>,
    tau: usize,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    net_metering: bool,
    policy: SplitPolicy,
    tol: T,
) -> Result<(DecisionTrajectory<T>, RepairPlan<T>)> {
    require_simultaneous(x, tau, tol)?;
    let rho = params.eta_c / params.eta_d;
    let loss = T::one() - rho;
    let grid_room = if net_metering {
        T::infinity()
    } else {
        pos(x.p_grid[tau])
    };
    let curt_room = pos(prof.p_sol[tau] - x.p_c[tau]);
    let amount = x.p_ch[tau]
        .min(x.p_dis[tau] / rho)
        .min((grid_room + curt_room) / loss);
    let (a, b) = split(amount * loss, grid_room, curt_room, policy);

    let mut out = x.clone();
    out.p_ch[tau] = if amount == x.p_ch[tau] { T::zero() } else { x.p_ch[tau] - amount };
    out.p_dis[tau] = pos(x.p_dis[tau] - rho * amount);
    out.p_grid[tau] = x.p_grid[tau] - a;
    out.p_c[tau] = x.p_c[tau] + b;
    let plan = RepairPlan {
        step: tau,
        case: RepairCase::Local,
        t_star: None,
        delta: x.p_dis[tau] - x.p_ch[tau],
        p: amount,
        a,
        b,
    };
    Ok((out, plan))
}

/// Nets out the overlap at `tau` when nothing charges afterwards.
pub fn repair_terminal<T: Scalar>(
    x: &DecisionTrajectory<T>,
    tau: usize,
    prof: &ExogenousProfile<T>,
    tol: T,
) -> Result<(DecisionTrajectory<T>, RepairPlan<T>)> {
    require_simultaneous(x, tau, tol)?;
    if x.p_grid[tau].abs() > tol {
        return Err(Error::Precondition(format!("grid import {} at step {tau} is not zero", x.p_grid[tau])));
    }
    if (x.p_c[tau] - prof.p_sol[tau]).abs() > tol {
        return Err(Error::Precondition(format!("solar at step {tau} is not fully curtailed")));
    }
    if let Some(t) = (tau + 1..x.len()).find(|&t| x.p_ch[t] > tol) {
        return Err(Error::Precondition(format!("step {t} charges after step {tau}")));
    }
    let delta = x.p_dis[tau] - x.p_ch[tau];
    if delta < -tol {
        return Err(Error::Precondition(format!("discharge below charge at step {tau}")));
    }
    let mut out = x.clone();
    out.p_ch[tau] = T::zero();
    out.p_dis[tau] = pos(delta);
    let plan = RepairPlan {
        step: tau,
        case: RepairCase::Terminal,
        t_star: None,
        delta,
        p: x.p_ch[tau],
        a: T::zero(),
        b: T::zero(),
    };
    Ok((out, plan))
}

/// First step after `tau` that charges by more than `tol`.
pub fn next_charging<T: Scalar>(x: &DecisionTrajectory<T>, tau: usize, tol: T) -> Option<usize> {
    (tau + 1..x.len()).find(|&t| x.p_ch[t] > tol)
}

/// Moves charging from `tau` to the first later charging step `t_star`.
pub fn repair_forwarding<T: Scalar>(
    x: &DecisionTrajectory<T>,
    tau: usize,
    t_star: usize,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    policy: SplitPolicy,
    tol: T,
) -> Result<(DecisionTrajectory<T>, RepairPlan<T>)> {
    require_simultaneous(x, tau, tol)?;
    if next_charging(x, tau, tol) != Some(t_star) {
        return Err(Error::Precondition(format!(
            "step {t_star} is not the first charging step after {tau}"
        )));
    }
    if x.p_dis[t_star] > tol {
        return Err(Error::Precondition(format!(
            "step {t_star} discharges {} while charging",
            x.p_dis[t_star]
        )));
    }
    let (ec, ed) = (params.eta_c, params.eta_d);
    let excess = ed / ec - T::one();
    let mut p = (ec * x.p_ch[t_star] / (ed - ec)).min(x.p_ch[tau]);
    let need = excess * p;
    let grid_room = pos(x.p_grid[t_star]);
    let curt_room = pos(prof.p_sol[t_star] - x.p_c[t_star]);
    let have = grid_room + curt_room;
    if need > have + tol {
        return Err(Error::SplitInfeasible {
            need: need.as_f64(),
            have: have.as_f64(),
        });
    }
    let (a, b) = split(need, grid_room, curt_room, policy);
    if a + b < need {
        // Within tolerance of the boxes; shrink the move to fit exactly.
        p = (a + b) / excess;
    }

    let mut out = x.clone();
    out.p_ch[tau] = if p == x.p_ch[tau] { T::zero() } else { x.p_ch[tau] - p };
    out.p_dis[tau] = x.p_dis[tau] - p;
    out.p_grid[t_star] = x.p_grid[t_star] - a;
    let moved = excess * p;
    out.p_ch[t_star] = pos(x.p_ch[t_star] - moved);
    out.p_c[t_star] = x.p_c[t_star] + b;
    let plan = RepairPlan {
        step: tau,
        case: RepairCase::Forwarding,
        t_star: Some(t_star),
        delta: x.p_dis[tau] - x.p_ch[tau],
        p,
        a,
        b,
    };
    Ok((out, plan))
}

/// Repeats detection and repair until no step is simultaneous.
#[allow(clippy::too_many_arguments)]
pub fn repair_until_clean<T: Scalar>(
    x: &DecisionTrajectory<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
    max_rounds: usize,
    policy: SplitPolicy,
) -> Result<RepairOutcome<T>> {
    let n = check_lengths(x, prof, tariff)?;
    let report = check_feasible(x, params, prof, tariff, tol)?;
    if !report.is_feasible() {
        let v = &report.violations[0];
        return Err(Error::InfeasibleInput(format!(
            "{} at step {} violated by {:e}",
            v.kind.label(),
            v.step,
            v.magnitude
        )));
    }

    let mut cur = x.clone();
    let mut plans = Vec::new();
    let mut total_charging = vec![cur.total_charging()];
    let mut rounds = 0;
    while let Some(tau) = detect(&cur, tol) {
        if rounds == max_rounds {
            return Err(Error::MaxRoundsExceeded(max_rounds));
        }
        rounds += 1;
        let before = cur.total_charging();

        let (next, plan) = repair_local(&cur, tau, params, prof, tariff.net_metering, policy, tol)?;
        if plan.p > T::zero() {
            cur = next;
            plans.push(plan);
        }
        // Each forwarding move either clears charging at tau or clears one
        // later charging step, so n + 1 moves always suffice.
        for _ in 0..=n {
            if cur.p_ch[tau].min(cur.p_dis[tau]) <= tol {
                break;
            }
            let (next, plan) = match next_charging(&cur, tau, tol) {
                Some(t_star) => repair_forwarding(&cur, tau, t_star, params, prof, policy, tol)?,
                None => repair_terminal(&cur, tau, prof, tol)?,
            };
            cur = next;
            plans.push(plan);
        }
        if cur.p_ch[tau].min(cur.p_dis[tau]) > tol {
            return Err(Error::Precondition(format!("step {tau} still simultaneous after repair")));
        }

        let after = cur.total_charging();
        if after >= before {
            return Err(Error::Precondition(format!(
                "total charging did not decrease in round {rounds}"
            )));
        }
        total_charging.push(after);
        let rep = check_feasible(&cur, params, prof, tariff, tol)?;
        if !rep.is_feasible() {
            return Err(Error::Precondition(format!(
                "repair at step {tau} broke feasibility: {:?}",
                rep.violations
            )));
        }
        debug!("repair round {rounds}: step {tau}, charging {before} -> {after}");
    }

    let cost_reduction = cost(x, tariff) - cost(&cur, tariff);
    Ok(RepairOutcome {
        trajectory: cur,
        rounds,
        cost_reduction,
        plans,
        total_charging,
    })
}
