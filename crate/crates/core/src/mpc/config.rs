//! Scenario files and their resolution into concrete daily data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EssParams, DEFAULT_TOL};

use super::ingest::{ingest_load_path, ingest_solar_path, PvArray};

/// Battery section of a scenario; the step length comes from `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssSection {
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
}

impl Default for EssSection {
    fn default() -> Self {
        let p = EssParams::<f64>::residential_default();
        Self {
            e_min: p.e_min,
            e_max: p.e_max,
            e0: p.e0,
            p_ch_max: p.p_ch_max,
            p_dis_max: p.p_dis_max,
            eta_c: p.eta_c,
            eta_d: p.eta_d,
        }
    }
}

impl EssSection {
    pub fn params(&self, dt: f64) -> EssParams<f64> {
        EssParams {
            e_min: self.e_min,
            e_max: self.e_max,
            e0: self.e0,
            p_ch_max: self.p_ch_max,
            p_dis_max: self.p_dis_max,
            eta_c: self.eta_c,
            eta_d: self.eta_d,
            dt,
        }
    }
}

/// Named price period covering one or more `[start, end)` hour ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricePeriod {
    pub name: String,
    pub price: f64,
    pub hours: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Flat(f64),
    Periods(Vec<PricePeriod>),
}

impl Schedule {
    /// Off-peak 9PM-9AM at $0.08, shoulder 9AM-2PM and 6PM-9PM at $0.13,
    /// on-peak 2PM-6PM at $0.18 per kWh.
    pub fn tou() -> Self {
        Self::tou_with_off_peak(0.08)
    }

    /// Same periods with free off-peak energy.
    pub fn tou_free_off_peak() -> Self {
        Self::tou_with_off_peak(0.0)
    }

    fn tou_with_off_peak(off_peak: f64) -> Self {
        Schedule::Periods(vec![
            PricePeriod {
                name: "off_peak".into(),
                price: off_peak,
                hours: vec![(21, 24), (0, 9)],
            },
            PricePeriod {
                name: "shoulder".into(),
                price: 0.13,
                hours: vec![(9, 14), (18, 21)],
            },
            PricePeriod {
                name: "on_peak".into(),
                price: 0.18,
                hours: vec![(14, 18)],
            },
        ])
    }

    /// Price for each hour of the day.
    pub fn hourly(&self) -> Result<[f64; 24]> {
        match self {
            Schedule::Flat(p) => {
                check_price(*p)?;
                Ok([*p; 24])
            }
            Schedule::Periods(periods) => {
                let mut out = [f64::NAN; 24];
                for period in periods {
                    check_price(period.price)?;
                    for &(start, end) in &period.hours {
                        if start >= end || end > 24 {
                            return Err(Error::InvalidTariff(format!(
                                "period {} has bad hour range [{start}, {end})",
                                period.name
                            )));
                        }
                        for h in start..end {
                            if !out[h as usize].is_nan() {
                                return Err(Error::InvalidTariff(format!("hour {h} is covered twice")));
                            }
                            out[h as usize] = period.price;
                        }
                    }
                }
                if let Some(h) = out.iter().position(|p| p.is_nan()) {
                    return Err(Error::InvalidTariff(format!("hour {h} has no price period")));
                }
                Ok(out)
            }
        }
    }
}

fn check_price(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTariff(format!("price {p} must be finite and non-negative")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSection {
    pub schedule: Schedule,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub net_metering: bool,
    /// Multiply every objective term by `dt`.
    #[serde(default)]
    pub energy_weighted_cost: bool,
}

/// Clipped half-sine solar day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSolar {
    pub peak_kw: f64,
    pub sunrise: f64,
    pub sunset: f64,
}

impl Default for SyntheticSolar {
    fn default() -> Self {
        Self {
            peak_kw: 3.0,
            sunrise: 6.0,
            sunset: 20.0,
        }
    }
}

impl SyntheticSolar {
    pub fn at(&self, hour: f64) -> f64 {
        if hour <= self.sunrise || hour >= self.sunset {
            return 0.0;
        }
        let phase = (hour - self.sunrise) / (self.sunset - self.sunrise);
        (self.peak_kw * (std::f64::consts::PI * phase).sin()).max(0.0)
    }
}

/// Base load plus Gaussian morning and evening peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticLoad {
    pub base_kw: f64,
    pub peak_kw: f64,
    pub morning_hour: f64,
    pub evening_hour: f64,
    /// Standard deviation of each peak (h).
    pub width: f64,
}

impl Default for SyntheticLoad {
    fn default() -> Self {
        Self {
            base_kw: 0.5,
            peak_kw: 2.0,
            morning_hour: 7.0,
            evening_hour: 19.0,
            width: 1.0,
        }
    }
}

impl SyntheticLoad {
    pub fn at(&self, hour: f64) -> f64 {
        let bump = |c: f64| {
            let z = (hour - c) / self.width;
            (-0.5 * z * z).exp()
        };
        let amp = self.peak_kw - self.base_kw;
        self.base_kw + amp * (bump(self.morning_hour) + bump(self.evening_hour))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SolarSource {
    Synthetic(SyntheticSolar),
    Csv {
        path: PathBuf,
        #[serde(default)]
        array: PvArray,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadSource {
    Synthetic(SyntheticLoad),
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub solar: SolarSource,
    pub load: LoadSource,
    #[serde(default = "one")]
    pub solar_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Feasibility and simultaneity tolerance (kW).
    pub feasibility: f64,
    /// KKT pass tolerance, scaled by `1 + ||data||`.
    pub kkt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: DEFAULT_TOL,
            kkt: 1e-8,
        }
    }
}

fn default_horizon() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub ess: EssSection,
    pub tariff: TariffSection,
    pub profiles: ProfileSection,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "one")]
    pub dt: f64,
    /// Receding-horizon steps to execute.
    #[serde(default = "default_horizon")]
    pub steps: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Paper-style day: residential battery, synthetic solar and load.
    pub fn synthetic(schedule: Schedule, alpha: f64, beta: f64, net_metering: bool) -> Self {
        Self {
            ess: EssSection::default(),
            tariff: TariffSection {
                schedule,
                alpha,
                beta,
                net_metering,
                energy_weighted_cost: false,
            },
            profiles: ProfileSection {
                solar: SolarSource::Synthetic(SyntheticSolar::default()),
                load: LoadSource::Synthetic(SyntheticLoad::default()),
                solar_scale: 1.0,
            },
            horizon: 24,
            dt: 1.0,
            steps: 24,
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.steps == 0 {
            return Err(Error::EmptyHorizon);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.profiles.solar_scale >= 0.0 && self.profiles.solar_scale.is_finite()) {
            return Err(Error::Config("solar_scale must be finite and non-negative".into()));
        }
        if !(self.tariff.alpha >= 0.0 && self.tariff.beta >= 0.0) {
            return Err(Error::InvalidTariff("alpha and beta must be non-negative".into()));
        }
        self.ess.params(self.dt).validate()?;
        self.tariff.schedule.hourly()?;
        Ok(())
    }

    /// Copy whose profile file paths are joined onto `base_dir`, so it can be
    /// resolved from anywhere.
    pub fn rebased(&self, base_dir: &Path) -> Self {
        let mut out = self.clone();
        if let SolarSource::Csv { path, .. } = &mut out.profiles.solar {
            *path = base_dir.join(&*path);
        }
        if let LoadSource::Csv { path } = &mut out.profiles.load {
            *path = base_dir.join(&*path);
        }
        out
    }

    /// Loads profile files (relative to `base_dir`) and fixes every number.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        self.validate()?;
        let solar: [f64; 24] = match &self.profiles.solar {
            SolarSource::Synthetic(s) => std::array::from_fn(|h| s.at(h as f64)),
            SolarSource::Csv { path, array } => ingest_solar_path(&base_dir.join(path), array)?,
        };
        let load: [f64; 24] = match &self.profiles.load {
            LoadSource::Synthetic(l) => std::array::from_fn(|h| l.at(h as f64)),
            LoadSource::Csv { path } => ingest_load_path(&base_dir.join(path))?,
        };
        let scale = self.profiles.solar_scale;
        Ok(Scenario {
            params: self.ess.params(self.dt),
            solar: solar.map(|p| p * scale),
            load,
            prices: self.tariff.schedule.hourly()?,
            alpha: self.tariff.alpha,
            beta: self.tariff.beta,
            net_metering: self.tariff.net_metering,
            energy_weighted_cost: self.tariff.energy_weighted_cost,
            horizon: self.horizon,
            steps: self.steps,
            tolerances: self.tolerances,
        })
    }
}

/// Fully resolved scenario: hourly daily profiles and prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub params: EssParams<f64>,
    pub solar: [f64; 24],
    pub load: [f64; 24],
    pub prices: [f64; 24],
    pub alpha: f64,
    pub beta: f64,
    pub net_metering: bool,
    pub energy_weighted_cost: bool,
    pub horizon: usize,
    pub steps: usize,
    pub tolerances: Tolerances,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tou_tables() {
        let p = Schedule::tou().hourly().unwrap();
        assert_eq!(p[0], 0.08);
        assert_eq!(p[8], 0.08);
        assert_eq!(p[9], 0.13);
        assert_eq!(p[13], 0.13);
        assert_eq!(p[14], 0.18);
        assert_eq!(p[17], 0.18);
        assert_eq!(p[18], 0.13);
        assert_eq!(p[20], 0.13);
        assert_eq!(p[21], 0.08);
        assert_eq!(p[23], 0.08);
        let free = Schedule::tou_free_off_peak().hourly().unwrap();
        assert_eq!(free[3], 0.0);
        assert_eq!(free[15], 0.18);
    }

    #[test]
    fn periods_must_partition_day() {
        let gap = Schedule::Periods(vec![PricePeriod {
            name: "day".into(),
            price: 0.1,
            hours: vec![(0, 23)],
        }]);
        assert!(matches!(gap.hourly(), Err(Error::InvalidTariff(_))));
        let overlap = Schedule::Periods(vec![
            PricePeriod {
                name: "a".into(),
                price: 0.1,
                hours: vec![(0, 13)],
            },
            PricePeriod {
                name: "b".into(),
                price: 0.2,
                hours: vec![(12, 24)],
            },
        ]);
        assert!(matches!(overlap.hourly(), Err(Error::InvalidTariff(_))));
    }

    #[test]
    fn synthetic_shapes() {
        let s = SyntheticSolar::default();
        assert!((s.at(13.0) - 3.0).abs() < 1e-12);
        assert_eq!(s.at(3.0), 0.0);
        assert_eq!(s.at(20.0), 0.0);
        let l = SyntheticLoad::default();
        assert!((l.at(7.0) - 2.0).abs() < 1e-6);
        assert!((l.at(19.0) - 2.0).abs() < 1e-6);
        assert!((l.at(13.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let json = r#"{
            "tariff": {"schedule": {"flat": 0.11}, "alpha": 0.001},
            "profiles": {"solar": {"synthetic": {}}, "load": {"synthetic": {}}, "solar_scale": 1.5}
        }"#;
        let cfg = ScenarioConfig::from_json(json).unwrap();
        assert_eq!(cfg.horizon, 24);
        assert_eq!(cfg.dt, 1.0);
        assert_eq!(cfg.ess, EssSection::default());
        let sc = cfg.resolve(Path::new(".")).unwrap();
        assert!((sc.solar[13] - 4.5).abs() < 1e-12);
        let back = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ScenarioConfig::from_json(r#"{"tariff": {"schedule": {"flat": 0.1}}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn rebased_paths() {
        let mut cfg = ScenarioConfig::synthetic(Schedule::Flat(0.1), 0.0, 0.0, false);
        cfg.profiles.load = LoadSource::Csv { path: "load.csv".into() };
        let r = cfg.rebased(Path::new("/data"));
        assert_eq!(r.profiles.load, LoadSource::Csv { path: "/data/load.csv".into() });
        assert_eq!(r.profiles.solar, cfg.profiles.solar);
        let abs = r.rebased(Path::new("/elsewhere"));
        assert_eq!(abs.profiles.load, r.profiles.load);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ScenarioConfig::synthetic(Schedule::Flat(0.11), 0.0, 0.0, false);
        cfg.horizon = 0;
        assert!(matches!(cfg.validate(), Err(Error::EmptyHorizon)));
        let mut cfg = ScenarioConfig::synthetic(Schedule::Flat(-0.1), 0.0, 0.0, false);
        assert!(matches!(cfg.validate(), Err(Error::InvalidTariff(_))));
        cfg.tariff.schedule = Schedule::Flat(0.1);
        cfg.ess.eta_d = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidParams(_))));
    }
}
