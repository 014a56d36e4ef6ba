//! Exhaustive grid search over battery powers for horizons of at most three
//! steps, with and without the constraint `p_ch * p_dis = 0`.
//!
//! Charging and discharging power are gridded per step. Given those, grid
//! power is fixed by the balance, and since grid energy never has a negative
//! price the cheapest curtailment is the smallest one that keeps grid power
//! admissible, so curtailment needs no grid of its own.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cost, DecisionTrajectory, EssParams, ExogenousProfile, Tariff};
use crate::scalar::Scalar;

pub const MAX_HORIZON: usize = 3;

/// Spacing of the power grid (kW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec<T> {
    pub step: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(step: T) -> Result<Self> {
        if !(step > T::zero() && step.is_finite()) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        Ok(Self { step })
    }

    /// 0.05 kW up to two steps, 0.1 kW for three.
    pub fn default_for(n: usize) -> Self {
        Self {
            step: if n <= 2 { T::lit(0.05) } else { T::lit(0.1) },
        }
    }

    /// `sum_t (c_e + alpha + beta) * step`, objective weights included.
    pub fn error_bound(&self, tariff: &Tariff<T>) -> T {
        (0..tariff.len())
            .map(|t| tariff.price(t) + tariff.charge_penalty() + tariff.discharge_penalty())
            .sum::<T>()
            * self.step
    }

    /// `0, step, 2 step, ...` up to `max`, with `max` itself always included.
    fn levels(&self, max: T) -> Vec<T> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let v = self.step * T::lit(k as f64);
            if v >= max - self.step * T::lit(1e-9) {
                break;
            }
            out.push(v);
            k += 1;
        }
        out.push(max);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub trajectory: DecisionTrajectory<T>,
    pub objective: T,
    /// Candidate points that passed the per-step checks, summed over steps.
    pub candidates: usize,
}

#[derive(Debug, Clone, Copy)]
struct Choice<T> {
    grid: T,
    ch: T,
    dis: T,
    curt: T,
    cost: T,
    soc_delta: T,
}

fn step_choices<T: Scalar>(
    t: usize,
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    grid: &GridSpec<T>,
    complementarity: bool,
) -> Vec<Choice<T>> {
    let (sol, load) = (prof.p_sol[t], prof.p_load[t]);
    let mut out = Vec::new();
    for &ch in &grid.levels(params.p_ch_max) {
        for &dis in &grid.levels(params.p_dis_max) {
            if complementarity && ch > T::zero() && dis > T::zero() {
                continue;
            }
            // grid = load - sol + curt + ch - dis
            let base = load - sol + ch - dis;
            let curt = if tariff.net_metering || base >= T::zero() {
                T::zero()
            } else {
                -base
            };
            if curt > sol {
                continue;
            }
            let g = base + curt;
            out.push(Choice {
                grid: g,
                ch,
                dis,
                curt,
                cost: tariff.price(t) * g + tariff.charge_penalty() * ch + tariff.discharge_penalty() * dis,
                soc_delta: params.dt * (params.eta_c * ch - params.eta_d * dis),
            });
        }
    }
    out
}

struct Search<'a, T> {
    choices: &'a [Vec<Choice<T>>],
    params: &'a EssParams<T>,
    slack: T,
}

struct Best<T> {
    cost: T,
    path: Vec<usize>,
}

impl<T: Scalar> Search<'_, T> {
    fn admissible(&self, e: T) -> bool {
        e >= self.params.e_min - self.slack && e <= self.params.e_max + self.slack
    }

    /// Depth-first scan of steps `t..` from SOC `e`, with `path[..t]` fixed
    /// and `acc` the cost so far.
    fn scan(&self, t: usize, e: T, acc: T, path: &mut [usize], best: &mut Option<Best<T>>) {
        if t == self.choices.len() {
            if best.as_ref().is_none_or(|b| acc < b.cost) {
                *best = Some(Best {
                    cost: acc,
                    path: path.to_vec(),
                });
            }
            return;
        }
        for (i, c) in self.choices[t].iter().enumerate() {
            let next = e + c.soc_delta;
            if self.admissible(next) {
                path[t] = i;
                self.scan(t + 1, next, acc + c.cost, path, best);
            }
        }
    }
}

/// Minimum-cost feasible grid point.
pub fn enumerate<T: Scalar>(
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
    grid: &GridSpec<T>,
    enforce_complementarity: bool,
) -> Result<OracleResult<T>> {
    params.validate()?;
    prof.validate()?;
    tariff.validate()?;
    let n = prof.len();
    if n == 0 {
        return Err(Error::EmptyHorizon);
    }
    if n > MAX_HORIZON {
        return Err(Error::HorizonTooLong(n));
    }
    if tariff.len() != n {
        return Err(Error::LengthMismatch {
            what: "tariff prices",
            expected: n,
            got: tariff.len(),
        });
    }

    let choices: Vec<Vec<Choice<T>>> = (0..n)
        .map(|t| step_choices(t, params, prof, tariff, grid, enforce_complementarity))
        .collect();
    let candidates = choices.iter().map(Vec::len).sum();
    let search = Search {
        choices: &choices,
        params,
        slack: T::lit(1e-12),
    };

    // Split on the first step; ties resolve to the lowest first-step index.
    let best = choices[0]
        .par_iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let e = params.e0 + c.soc_delta;
            if !search.admissible(e) {
                return None;
            }
            let mut path = vec![0; n];
            path[0] = i;
            let mut best = None;
            search.scan(1, e, c.cost, &mut path, &mut best);
            best
        })
        .min_by(|a, b| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.path[0].cmp(&b.path[0]))
        })
        .ok_or(Error::NoFeasibleGridPoint)?;

    let mut x = DecisionTrajectory::zeros(n);
    for (t, &i) in best.path.iter().enumerate() {
        let c = choices[t][i];
        x.p_grid[t] = c.grid;
        x.p_ch[t] = c.ch;
        x.p_dis[t] = c.dis;
        x.p_c[t] = c.curt;
    }
    Ok(OracleResult {
        objective: cost(&x, tariff),
        trajectory: x,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasible, max_simultaneity};

    fn params() -> EssParams<f64> {
        EssParams::residential_default()
    }

    #[test]
    fn single_step_serves_load_from_battery() {
        let prof = ExogenousProfile::new(vec![0.0], vec![1.0]);
        let tariff = Tariff::flat(0.11, 1, 0.001, 0.001, false);
        let g = GridSpec::new(0.01).unwrap();
        let r = enumerate(&params(), &prof, &tariff, &g, false).unwrap();
        assert!((r.objective - 0.001).abs() < 1e-12);
        assert!((r.trajectory.p_dis[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_inputs() {
        let prof = ExogenousProfile::zeros(3);
        let tariff = Tariff::flat(0.11, 3, 0.001, 0.001, false);
        let g = GridSpec::default_for(3);
        for comp in [false, true] {
            let r = enumerate(&params(), &prof, &tariff, &g, comp).unwrap();
            assert_eq!(r.objective, 0.0);
        }
    }

    #[test]
    fn complementarity_never_cheaper() {
        let prof = ExogenousProfile::new(vec![3.0, 0.5], vec![0.4, 1.5]);
        for (a, b, net) in [(0.0, 0.0, false), (0.001, 0.0, false), (0.0, 0.0, true)] {
            let tariff = Tariff::new(vec![0.13, 0.18], a, b, net);
            let g = GridSpec::default_for(2);
            let free = enumerate(&params(), &prof, &tariff, &g, false).unwrap();
            let comp = enumerate(&params(), &prof, &tariff, &g, true).unwrap();
            assert!(comp.objective >= free.objective - 1e-12);
            assert_eq!(max_simultaneity(&comp.trajectory), 0.0);
            assert!(check_feasible(&comp.trajectory, &params(), &prof, &tariff, 1e-9)
                .unwrap()
                .is_feasible());
        }
    }

    #[test]
    fn rejects_long_horizon_and_bad_step() {
        let prof = ExogenousProfile::zeros(4);
        let tariff = Tariff::flat(0.11, 4, 0.0, 0.0, false);
        assert!(matches!(
            enumerate(&params(), &prof, &tariff, &GridSpec { step: 0.1 }, false),
            Err(Error::HorizonTooLong(4))
        ));
        assert!(GridSpec::new(0.0).is_err());
    }

    #[test]
    fn levels_include_endpoint() {
        let g = GridSpec { step: 0.4 };
        let l = g.levels(1.0);
        assert_eq!(l.len(), 4);
        assert_eq!(*l.last().unwrap(), 1.0);
    }

    #[test]
    fn error_bound_formula() {
        let tariff = Tariff::new(vec![0.1f64, 0.2], 0.01, 0.02, false);
        let g = GridSpec { step: 0.05 };
        assert!((g.error_bound(&tariff) - (0.13 + 0.23) * 0.05).abs() < 1e-15);
    }
}
