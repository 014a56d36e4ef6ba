//! Receding-horizon execution.

use log::{debug, info};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::{self, KktReport};
use crate::model::{
    cost, simultaneous_steps, soc_step, DecisionTrajectory, EssParams, ExogenousProfile, Tariff,
};
use crate::problem::{build_p1, extract_trajectory};
use crate::solver::{solve, SolveOptions, SolveStatus};

use super::config::{Scenario, ScenarioConfig};

impl Scenario {
    /// Hour-of-day of wall-clock step `k`, wrapping every 24 h.
    pub fn hour_of(&self, k: usize) -> usize {
        ((k as f64 * self.params.dt).floor() as usize) % 24
    }

    /// Perfect forecast of `n` steps starting at wall-clock step `start`.
    pub fn profile_window(&self, start: usize, n: usize) -> ExogenousProfile<f64> {
        let hours: Vec<usize> = (start..start + n).map(|k| self.hour_of(k)).collect();
        ExogenousProfile::new(
            hours.iter().map(|&h| self.solar[h]).collect(),
            hours.iter().map(|&h| self.load[h]).collect(),
        )
    }

    pub fn tariff_window(&self, start: usize, n: usize) -> Tariff<f64> {
        let prices = (start..start + n).map(|k| self.prices[self.hour_of(k)]).collect();
        let t = Tariff::new(prices, self.alpha, self.beta, self.net_metering);
        if self.energy_weighted_cost {
            t.with_energy_weighting(self.params.dt)
        } else {
            t
        }
    }

    /// Battery parameters with a different initial energy. Values within
    /// the feasibility tolerance outside the window are clamped into it, so
    /// rounding in the realized energy cannot make the next plan invalid.
    pub fn params_from(&self, e0: f64) -> EssParams<f64> {
        let p = &self.params;
        let tol = self.tolerances.feasibility;
        let e0 = if e0 < p.e_min && e0 >= p.e_min - tol {
            p.e_min
        } else if e0 > p.e_max && e0 <= p.e_max + tol {
            p.e_max
        } else {
            e0
        };
        p.with_e0(e0)
    }
}

/// One wall-clock step of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub hour: usize,
    /// Energy before the applied control.
    pub soc_before: f64,
    /// Energy after the applied control.
    pub soc_after: f64,
    pub p_grid: f64,
    pub p_ch: f64,
    pub p_dis: f64,
    pub p_c: f64,
    pub plan: DecisionTrajectory<f64>,
    pub plan_objective: f64,
    pub iterations: usize,
    pub kkt: KktReport<f64>,
    /// Applied control charges and discharges at once.
    pub simultaneous: bool,
    /// Planned steps that charge and discharge at once.
    pub plan_simultaneous_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub scenario: Scenario,
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn applied(&self) -> DecisionTrajectory<f64> {
        DecisionTrajectory {
            p_grid: self.steps.iter().map(|s| s.p_grid).collect(),
            p_ch: self.steps.iter().map(|s| s.p_ch).collect(),
            p_dis: self.steps.iter().map(|s| s.p_dis).collect(),
            p_c: self.steps.iter().map(|s| s.p_c).collect(),
        }
    }

    /// Realized energy, initial value first.
    pub fn realized_soc(&self) -> Vec<f64> {
        std::iter::once(self.scenario.params.e0)
            .chain(self.steps.iter().map(|s| s.soc_after))
            .collect()
    }

    /// Inputs seen over the executed steps.
    pub fn realized_profile(&self) -> ExogenousProfile<f64> {
        self.scenario.profile_window(0, self.steps.len())
    }

    pub fn realized_tariff(&self) -> Tariff<f64> {
        self.scenario.tariff_window(0, self.steps.len())
    }

    /// Cost of the applied controls.
    pub fn total_cost(&self) -> f64 {
        cost(&self.applied(), &self.realized_tariff())
    }

    pub fn simultaneity_steps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.simultaneous).map(|s| s.step).collect()
    }

    pub fn all_kkt_passed(&self) -> bool {
        self.steps.iter().all(|s| s.kkt.passed)
    }
}

/// Solves the plan for wall-clock step `start` from energy `e0`.
pub fn plan_step(
    sc: &Scenario,
    start: usize,
    e0: f64,
    opts: &SolveOptions<f64>,
) -> Result<(DecisionTrajectory<f64>, f64, usize, KktReport<f64>)> {
    let params = sc.params_from(e0);
    let prof = sc.profile_window(start, sc.horizon);
    let tariff = sc.tariff_window(start, sc.horizon);
    let (lp, index) = build_p1(&params, &prof, &tariff)?;
    let fail = |reason: String| Error::StepFailed {
        step: start,
        reason,
        lp_dump: lp.dump(),
    };
    let outcome = solve(&lp, opts).map_err(|e| fail(e.to_string()))?;
    match &outcome.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible(_) => return Err(fail("plan LP is infeasible".into())),
        SolveStatus::Unbounded(_) => return Err(fail("plan LP is unbounded".into())),
    }
    let report = kkt::check(&lp, &index, &outcome, &params, &prof, &tariff, sc.tolerances.kkt)?;
    let plan = extract_trajectory(&outcome.primal, sc.horizon)?;
    Ok((plan, outcome.objective, outcome.iterations, report))
}

/// Runs an already resolved scenario.
pub fn run_scenario(sc: &Scenario) -> Result<RunLog> {
    run_with(sc, &SolveOptions::default())
}

pub fn run_with(sc: &Scenario, opts: &SolveOptions<f64>) -> Result<RunLog> {
    let tol = sc.tolerances.feasibility;
    let mut e = sc.params.e0;
    let mut steps = Vec::with_capacity(sc.steps);
    for k in 0..sc.steps {
        let (plan, objective, iterations, report) = plan_step(sc, k, e, opts)?;
        if !report.passed {
            debug!("step {k}: KKT residual {:e} above {:e}", report.max_residual(), report.threshold);
        }
        let u = plan.step(0);
        let next = soc_step(e, u.p_ch, u.p_dis, &sc.params);
        steps.push(StepRecord {
            step: k,
            hour: sc.hour_of(k),
            soc_before: e,
            soc_after: next,
            p_grid: u.p_grid,
            p_ch: u.p_ch,
            p_dis: u.p_dis,
            p_c: u.p_c,
            plan_simultaneous_steps: simultaneous_steps(&plan, tol),
            simultaneous: u.p_ch.min(u.p_dis) > tol,
            plan,
            plan_objective: objective,
            iterations,
            kkt: report,
        });
        e = next;
    }
    info!("ran {} steps, final energy {e:.4} kWh", sc.steps);
    Ok(RunLog {
        scenario: sc.clone(),
        steps,
    })
}

/// Resolves `config` against `base_dir` and runs it.
pub fn run_in(config: &ScenarioConfig, base_dir: &std::path::Path) -> Result<RunLog> {
    run_scenario(&config.resolve(base_dir)?)
}

/// Runs a scenario whose profile paths, if any, are relative to the
/// working directory.
pub fn run(config: &ScenarioConfig) -> Result<RunLog> {
    run_in(config, std::path::Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::soc_step;
    use crate::mpc::config::{LoadSource, Schedule, SolarSource, SyntheticLoad, SyntheticSolar};

    fn zero_config(alpha: f64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::synthetic(Schedule::Flat(0.11), alpha, alpha, false);
        cfg.profiles.solar = SolarSource::Synthetic(SyntheticSolar {
            peak_kw: 0.0,
            ..Default::default()
        });
        cfg.profiles.load = LoadSource::Synthetic(SyntheticLoad {
            base_kw: 0.0,
            peak_kw: 0.0,
            ..Default::default()
        });
        cfg
    }

    #[test]
    fn zero_inputs_give_zero_controls() {
        let log = run(&zero_config(0.001)).unwrap();
        assert_eq!(log.steps.len(), 24);
        for s in &log.steps {
            for v in [s.p_grid, s.p_ch, s.p_dis, s.p_c] {
                assert!(v.abs() < 1e-9, "step {} control {v}", s.step);
            }
        }
    }

    #[test]
    fn flat_price_is_non_simultaneous() {
        let cfg = ScenarioConfig::synthetic(Schedule::Flat(0.11), 0.0, 0.0, false);
        let log = run(&cfg).unwrap();
        assert!(log.simultaneity_steps().is_empty());
        assert!(log.all_kkt_passed());
    }

    #[test]
    fn tou_discharges_on_peak() {
        let mut cfg = ScenarioConfig::synthetic(Schedule::tou(), 0.001, 0.0, false);
        // Weak solar so the load exceeds it during the on-peak afternoon.
        cfg.profiles.solar_scale = 0.3;
        let log = run(&cfg).unwrap();
        let sc = &log.scenario;
        let on_peak_deficit: Vec<_> = log
            .steps
            .iter()
            .filter(|s| (14..18).contains(&s.hour) && sc.load[s.hour] > sc.solar[s.hour])
            .collect();
        assert!(!on_peak_deficit.is_empty());
        assert!(on_peak_deficit.iter().any(|s| s.p_dis > 1e-6));
        assert!(log.all_kkt_passed());
    }

    #[test]
    fn soc_follows_dynamics_and_bounds() {
        for schedule in [Schedule::Flat(0.11), Schedule::tou(), Schedule::tou_free_off_peak()] {
            for net in [false, true] {
                let mut cfg = ScenarioConfig::synthetic(schedule.clone(), 0.001, 0.001, net);
                cfg.profiles.solar_scale = 1.5;
                let log = run(&cfg).unwrap();
                let p = log.scenario.params;
                for s in &log.steps {
                    assert_eq!(s.soc_after, soc_step(s.soc_before, s.p_ch, s.p_dis, &p));
                    assert!(s.soc_after >= p.e_min - 1e-9 && s.soc_after <= p.e_max + 1e-9);
                    assert!(s.kkt.passed);
                }
                let soc = log.realized_soc();
                assert_eq!(soc.len(), 25);
                assert_eq!(soc[0], p.e0);
            }
        }
    }

    #[test]
    fn stationary_inputs_give_stationary_policy() {
        let mut cfg = ScenarioConfig::synthetic(Schedule::Flat(0.11), 0.001, 0.001, false);
        cfg.profiles.solar = SolarSource::Synthetic(SyntheticSolar {
            peak_kw: 0.0,
            ..Default::default()
        });
        cfg.profiles.load = LoadSource::Synthetic(SyntheticLoad {
            base_kw: 1.0,
            peak_kw: 1.0,
            ..Default::default()
        });
        // Battery pinned at its floor so the state never changes.
        cfg.ess.e0 = cfg.ess.e_min;
        let log = run(&cfg).unwrap();
        let first = &log.steps[0];
        for s in &log.steps {
            assert!((s.p_grid - first.p_grid).abs() < 1e-9);
            assert!((s.p_ch - first.p_ch).abs() < 1e-9);
            assert!((s.p_dis - first.p_dis).abs() < 1e-9);
            assert!((s.p_c - first.p_c).abs() < 1e-9);
        }
        assert!((first.p_grid - 1.0).abs() < 1e-9);
    }

    #[test]
    fn solver_failure_reports_step() {
        let sc = ScenarioConfig::synthetic(Schedule::Flat(0.11), 0.0, 0.0, false)
            .resolve(std::path::Path::new("."))
            .unwrap();
        let opts = SolveOptions {
            max_iter: 1,
            ..Default::default()
        };
        match run_with(&sc, &opts) {
            Err(Error::StepFailed { step, reason, lp_dump }) => {
                assert_eq!(step, 0);
                assert!(reason.contains("iteration"));
                assert!(!lp_dump.is_empty());
            }
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn wrap_around_window() {
        let sc = ScenarioConfig::synthetic(Schedule::tou(), 0.0, 0.0, false)
            .resolve(std::path::Path::new("."))
            .unwrap();
        let w = sc.profile_window(23, 3);
        assert_eq!(w.p_load, vec![sc.load[23], sc.load[0], sc.load[1]]);
        let t = sc.tariff_window(14, 2);
        assert_eq!(t.c_e, vec![0.18, 0.18]);
    }
}
