//! Hourly CSV profiles.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PV array used to turn irradiance into AC power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvArray {
    pub area_m2: f64,
    pub array_efficiency: f64,
    pub inverter_efficiency: f64,
}

impl Default for PvArray {
    fn default() -> Self {
        Self {
            area_m2: 20.0,
            array_efficiency: 0.16,
            inverter_efficiency: 0.95,
        }
    }
}

impl PvArray {
    /// AC power (kW) for an irradiance in W/m².
    pub fn power_kw(&self, irradiance: f64) -> f64 {
        irradiance * self.area_m2 * self.array_efficiency * self.inverter_efficiency / 1000.0
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.area_m2) && ok(self.array_efficiency) && ok(self.inverter_efficiency) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid PV array {self:?}")))
        }
    }
}

#[derive(Debug, Deserialize)]
struct SolarRow {
    hour: u32,
    irradiance_w_m2: f64,
}

#[derive(Debug, Deserialize)]
struct LoadRow {
    hour: u32,
    load_kw: f64,
}

/// Reads `(hour, value)` rows into a day, requiring each hour 0..=23 once.
fn read_day<R: Read, Row: serde::de::DeserializeOwned>(
    reader: R,
    what: &str,
    split: impl Fn(Row) -> (u32, f64),
) -> Result<[f64; 24]> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = [f64::NAN; 24];
    for row in rdr.deserialize() {
        let (hour, v) = split(row?);
        if hour > 23 {
            return Err(Error::InvalidProfile(format!("{what}: hour {hour} outside 0-23")));
        }
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidProfile(format!("{what}: negative or non-finite value {v} at hour {hour}")));
        }
        if !out[hour as usize].is_nan() {
            return Err(Error::InvalidProfile(format!("{what}: hour {hour} given twice")));
        }
        out[hour as usize] = v;
    }
    if let Some(h) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidProfile(format!("{what}: hour {h} missing")));
    }
    Ok(out)
}

/// Solar power (kW) from an `hour,irradiance_w_m2` CSV.
pub fn ingest_solar<R: Read>(reader: R, array: &PvArray) -> Result<[f64; 24]> {
    array.validate()?;
    let irr = read_day(reader, "irradiance", |r: SolarRow| (r.hour, r.irradiance_w_m2))?;
    Ok(irr.map(|g| array.power_kw(g)))
}

/// Load power (kW) from an `hour,load_kw` CSV.
pub fn ingest_load<R: Read>(reader: R) -> Result<[f64; 24]> {
    read_day(reader, "load", |r: LoadRow| (r.hour, r.load_kw))
}

pub fn ingest_solar_path(path: &Path, array: &PvArray) -> Result<[f64; 24]> {
    ingest_solar(std::fs::File::open(path)?, array)
}

pub fn ingest_load_path(path: &Path) -> Result<[f64; 24]> {
    ingest_load(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(header: &str, f: impl Fn(u32) -> f64) -> String {
        let mut s = format!("{header}\n");
        for h in 0..24 {
            s.push_str(&format!("{h},{}\n", f(h)));
        }
        s
    }

    #[test]
    fn irradiance_conversion() {
        let csv = day("hour,irradiance_w_m2", |h| if h == 12 { 1000.0 } else { 0.0 });
        let p = ingest_solar(csv.as_bytes(), &PvArray::default()).unwrap();
        assert!((p[12] - 3.04).abs() < 1e-12);
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn load_rows_any_order() {
        let mut csv = String::from("hour,load_kw\n");
        for h in (0..24).rev() {
            csv.push_str(&format!("{h}, {}\n", h as f64 * 0.1));
        }
        let p = ingest_load(csv.as_bytes()).unwrap();
        assert!((p[23] - 2.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let neg = day("hour,irradiance_w_m2", |h| if h == 3 { -1.0 } else { 0.0 });
        assert!(matches!(
            ingest_solar(neg.as_bytes(), &PvArray::default()),
            Err(Error::InvalidProfile(_))
        ));
        let short = "hour,load_kw\n0,1.0\n";
        assert!(matches!(ingest_load(short.as_bytes()), Err(Error::InvalidProfile(_))));
        let garbage = "hour,load_kw\n0,abc\n";
        assert!(matches!(ingest_load(garbage.as_bytes()), Err(Error::Csv(_))));
        let wrong_header = day("hour,kw", |_| 1.0);
        assert!(ingest_load(wrong_header.as_bytes()).is_err());
    }
}
