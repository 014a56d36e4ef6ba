//! Domain types for the single-home storage dispatch problem, the SOC
//! recursion, and direct (LP-free) feasibility and cost evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ConstraintKind;
use crate::scalar::{max_of, Scalar};

/// Default absolute tolerance (kW) for feasibility and simultaneity checks.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Battery physics and operating limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssParams<T> {
    /// Lower SOC limit (kWh).
    pub e_min: T,
    /// Upper SOC limit (kWh).
    pub e_max: T,
    /// Initial SOC (kWh).
    pub e0: T,
    /// Charging power limit (kW).
    pub p_ch_max: T,
    /// Discharging power limit (kW).
    pub p_dis_max: T,
    /// Charge efficiency, `0 < eta_c < eta_d`.
    pub eta_c: T,
    /// Discharge coefficient (energy drawn per unit of delivered power).
    pub eta_d: T,
    /// Step length (h).
    pub dt: T,
}

impl<T: Scalar> EssParams<T> {
    /// 5 kWh battery kept between 15 % and 85 % SOC, starting at 2 kWh,
    /// 3 kW inverter limit, `eta_c = 0.95`, `eta_d = 1/0.95`, hourly steps.
    pub fn residential_default() -> Self {
        Self {
            e_min: T::lit(0.15 * 5.0),
            e_max: T::lit(0.85 * 5.0),
            e0: T::lit(2.0),
            p_ch_max: T::lit(3.0),
            p_dis_max: T::lit(3.0),
            eta_c: T::lit(0.95),
            eta_d: T::one() / T::lit(0.95),
            dt: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        let fields = [
            self.e_min,
            self.e_max,
            self.e0,
            self.p_ch_max,
            self.p_dis_max,
            self.eta_c,
            self.eta_d,
            self.dt,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if !(self.eta_c > T::zero() && self.eta_c < self.eta_d) {
            return bad("efficiencies must satisfy 0 < eta_c < eta_d");
        }
        if !(T::zero() <= self.e_min && self.e_min <= self.e0 && self.e0 <= self.e_max) {
            return bad("SOC limits must satisfy 0 <= e_min <= e0 <= e_max");
        }
        if !(self.p_ch_max > T::zero() && self.p_dis_max > T::zero()) {
            return bad("power limits must be positive");
        }
        if !(self.dt > T::zero()) {
            return bad("dt must be positive");
        }
        Ok(())
    }

    /// `eta_d / eta_c`, the factor by which a round trip loses energy.
    pub fn efficiency_ratio(&self) -> T {
        self.eta_d / self.eta_c
    }

    /// True when the strict practical condition `eta_c < 1 < eta_d` holds.
    pub fn is_strict(&self) -> bool {
        self.eta_c < T::one() && T::one() < self.eta_d
    }

    pub fn with_e0(mut self, e0: T) -> Self {
        self.e0 = e0;
        self
    }
}

/// Energy price schedule and battery usage penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff<T> {
    /// Price of grid energy per step ($/kWh).
    pub c_e: Vec<T>,
    /// Charging penalty ($/kW).
    pub alpha: T,
    /// Discharging penalty ($/kW).
    pub beta: T,
    /// Export allowed (grid power may go negative).
    pub net_metering: bool,
    /// Multiplier applied to every objective term. `1` reproduces the
    /// literal per-step objective; `dt` turns powers into energies.
    pub cost_weight: T,
}

impl<T: Scalar> Tariff<T> {
    pub fn new(c_e: Vec<T>, alpha: T, beta: T, net_metering: bool) -> Self {
        Self {
            c_e,
            alpha,
            beta,
            net_metering,
            cost_weight: T::one(),
        }
    }

    pub fn flat(price: T, n: usize, alpha: T, beta: T, net_metering: bool) -> Self {
        Self::new(vec![price; n], alpha, beta, net_metering)
    }

    /// Weights each objective term by the step length (energy-weighted cost).
    pub fn with_energy_weighting(mut self, dt: T) -> Self {
        self.cost_weight = dt;
        self
    }

    pub fn len(&self) -> usize {
        self.c_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_e.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_e.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return Err(Error::InvalidTariff(
                "energy prices must be finite and non-negative".into(),
            ));
        }
        if !(self.alpha >= T::zero() && self.beta >= T::zero()) {
            return Err(Error::InvalidTariff("alpha and beta must be >= 0".into()));
        }
        if !(self.cost_weight > T::zero() && self.cost_weight.is_finite()) {
            return Err(Error::InvalidTariff("cost weight must be positive".into()));
        }
        Ok(())
    }

    /// Objective coefficient of grid power at step `t`.
    #[inline]
    pub fn price(&self, t: usize) -> T {
        self.cost_weight * self.c_e[t]
    }

    /// Objective coefficient of charging power.
    #[inline]
    pub fn charge_penalty(&self) -> T {
        self.cost_weight * self.alpha
    }

    /// Objective coefficient of discharging power.
    #[inline]
    pub fn discharge_penalty(&self) -> T {
        self.cost_weight * self.beta
    }

    /// Sub-schedule for steps `start..start + n`.
    pub fn window(&self, start: usize, n: usize) -> Self {
        Self {
            c_e: self.c_e[start..start + n].to_vec(),
            ..self.clone()
        }
    }
}

/// Forecast of uncontrollable inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousProfile<T> {
    /// Available solar power (kW).
    pub p_sol: Vec<T>,
    /// House load (kW).
    pub p_load: Vec<T>,
}

impl<T: Scalar> ExogenousProfile<T> {
    pub fn new(p_sol: Vec<T>, p_load: Vec<T>) -> Self {
        Self { p_sol, p_load }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![T::zero(); n], vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.p_sol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_sol.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_sol.len() != self.p_load.len() {
            return Err(Error::LengthMismatch {
                what: "profile load",
                expected: self.p_sol.len(),
                got: self.p_load.len(),
            });
        }
        let ok = |v: &[T]| v.iter().all(|p| p.is_finite() && *p >= T::zero());
        if !ok(&self.p_sol) || !ok(&self.p_load) {
            return Err(Error::InvalidProfile(
                "solar and load must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Control vector of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<T> {
    pub p_grid: T,
    pub p_ch: T,
    pub p_dis: T,
    pub p_c: T,
}

/// Stacked decision vector: grid, charge, discharge and curtailment per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrajectory<T> {
    pub p_grid: Vec<T>,
    pub p_ch: Vec<T>,
    pub p_dis: Vec<T>,
    pub p_c: Vec<T>,
}

impl<T: Scalar> DecisionTrajectory<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_grid: vec![T::zero(); n],
            p_ch: vec![T::zero(); n],
            p_dis: vec![T::zero(); n],
            p_c: vec![T::zero(); n],
        }
    }

    /// Battery idle, all solar curtailed, load served from the grid.
    /// Feasible for every profile with non-negative load.
    pub fn traditional(prof: &ExogenousProfile<T>) -> Self {
        let n = prof.len();
        Self {
            p_grid: prof.p_load.clone(),
            p_ch: vec![T::zero(); n],
            p_dis: vec![T::zero(); n],
            p_c: prof.p_sol.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.p_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_grid.is_empty()
    }

    /// Checks that all four series share one length and returns it.
    pub fn checked_len(&self) -> Result<usize> {
        let n = self.p_grid.len();
        for (what, v) in [("p_ch", &self.p_ch), ("p_dis", &self.p_dis), ("p_c", &self.p_c)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(n)
    }

    pub fn step(&self, t: usize) -> StepControl<T> {
        StepControl {
            p_grid: self.p_grid[t],
            p_ch: self.p_ch[t],
            p_dis: self.p_dis[t],
            p_c: self.p_c[t],
        }
    }

    pub fn set_step(&mut self, t: usize, s: StepControl<T>) {
        self.p_grid[t] = s.p_grid;
        self.p_ch[t] = s.p_ch;
        self.p_dis[t] = s.p_dis;
        self.p_c[t] = s.p_c;
    }

    /// Sum of charging power over the horizon.
    pub fn total_charging(&self) -> T {
        self.p_ch.iter().copied().sum()
    }
}

/// State of charge at the boundaries of each step; `e[0]` is the initial SOC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocTrajectory<T> {
    pub e: Vec<T>,
}

impl<T: Scalar> SocTrajectory<T> {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

/// One step of the linear storage model.
#[inline]
pub fn soc_step<T: Scalar>(e: T, p_ch: T, p_dis: T, params: &EssParams<T>) -> T {
    e + params.eta_c * params.dt * p_ch - params.eta_d * params.dt * p_dis
}

pub fn soc_trajectory<T: Scalar>(x: &DecisionTrajectory<T>, params: &EssParams<T>) -> SocTrajectory<T> {
    let mut e = Vec::with_capacity(x.len() + 1);
    e.push(params.e0);
    let mut cur = params.e0;
    for (&ch, &dis) in x.p_ch.iter().zip(&x.p_dis) {
        cur = soc_step(cur, ch, dis, params);
        e.push(cur);
    }
    SocTrajectory { e }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub step: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

/// Per-constraint violation amounts (all `>= 0`) for a candidate trajectory,
/// evaluated directly from the physical model rather than from LP rows.
pub(crate) fn constraint_violations<T: Scalar>(
    x: &DecisionTrajectory<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    net_metering: bool,
) -> Vec<(ConstraintKind, usize, T)> {
    use ConstraintKind::*;
    let n = x.len();
    let soc = soc_trajectory(x, params);
    let mut out = Vec::with_capacity(10 * n);
    let below = |v: T, lo: T| lo - v;
    let above = |v: T, hi: T| v - hi;
    for t in 0..n {
        if !net_metering {
            out.push((GridLower, t, below(x.p_grid[t], T::zero())));
        }
        out.push((ChLower, t, below(x.p_ch[t], T::zero())));
        out.push((ChUpper, t, above(x.p_ch[t], params.p_ch_max)));
        out.push((DisLower, t, below(x.p_dis[t], T::zero())));
        out.push((DisUpper, t, above(x.p_dis[t], params.p_dis_max)));
        out.push((SocLower, t, below(soc.e[t + 1], params.e_min)));
        out.push((SocUpper, t, above(soc.e[t + 1], params.e_max)));
        out.push((SolLower, t, below(x.p_c[t], T::zero())));
        out.push((SolUpper, t, above(x.p_c[t], prof.p_sol[t])));
        out.push((Balance, t, balance_residual(x, prof, t).abs()));
    }
    out
}

/// Right-hand side of the power balance at step `t`; zero when balanced.
#[inline]
pub fn balance_residual<T: Scalar>(x: &DecisionTrajectory<T>, prof: &ExogenousProfile<T>, t: usize) -> T {
    -x.p_grid[t] + prof.p_load[t] - (prof.p_sol[t] - x.p_c[t]) - x.p_dis[t] + x.p_ch[t]
}

pub(crate) fn check_lengths<T: Scalar>(
    x: &DecisionTrajectory<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
) -> Result<usize> {
    let n = x.checked_len()?;
    for (what, got) in [
        ("profile solar", prof.p_sol.len()),
        ("profile load", prof.p_load.len()),
        ("tariff prices", tariff.c_e.len()),
    ] {
        if got != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    Ok(n)
}

/// Lists every constraint violated by more than `tol`.
pub fn check_feasible<T: Scalar>(
    x: &DecisionTrajectory<T>,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    tol: T,
) -> Result<FeasibilityReport> {
    check_lengths(x, prof, tariff)?;
    let violations = constraint_violations(x, params, prof, tariff.net_metering)
        .into_iter()
        .filter(|(_, _, m)| *m > tol || m.is_nan())
        .map(|(kind, step, m)| Violation {
            kind,
            step,
            magnitude: m.as_f64(),
        })
        .collect();
    Ok(FeasibilityReport { violations })
}

/// Objective value: grid energy cost plus linear battery usage penalties.
pub fn cost<T: Scalar>(x: &DecisionTrajectory<T>, tariff: &Tariff<T>) -> T {
    (0..x.len())
        .map(|t| {
            tariff.price(t) * x.p_grid[t]
                + tariff.charge_penalty() * x.p_ch[t]
                + tariff.discharge_penalty() * x.p_dis[t]
        })
        .sum()
}

/// `min(p_ch, p_dis)` per step.
pub fn simultaneity_index<T: Scalar>(x: &DecisionTrajectory<T>) -> Vec<T> {
    x.p_ch
        .iter()
        .zip(&x.p_dis)
        .map(|(&c, &d)| c.min(d))
        .collect()
}

/// Steps whose simultaneity index exceeds `tol`.
pub fn simultaneous_steps<T: Scalar>(x: &DecisionTrajectory<T>, tol: T) -> Vec<usize> {
    simultaneity_index(x)
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s > tol)
        .map(|(t, _)| t)
        .collect()
}

pub fn max_simultaneity<T: Scalar>(x: &DecisionTrajectory<T>) -> T {
    max_of(simultaneity_index(x))
}
