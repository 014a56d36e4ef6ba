//! Output files: fixed-precision CSV and JSON, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hems_core::{DecisionTrajectory, EssParams};
use serde::{Deserialize, Serialize};

/// Twelve significant digits, with negative zero printed as zero.
pub fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.11e}")
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// `hour,p_grid,p_ch,p_dis,p_c,soc` where `soc` is the energy at the end of
/// the step.
pub fn trajectory_csv(hours: &[usize], x: &DecisionTrajectory<f64>, soc_end: &[f64]) -> String {
    let mut s = String::from("hour,p_grid,p_ch,p_dis,p_c,soc\n");
    for t in 0..x.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            hours[t],
            num(x.p_grid[t]),
            num(x.p_ch[t]),
            num(x.p_dis[t]),
            num(x.p_c[t]),
            num(soc_end[t])
        ));
    }
    s
}

/// End-of-step energies of `x` starting from `params.e0`.
pub fn soc_end(x: &DecisionTrajectory<f64>, params: &EssParams<f64>) -> Vec<f64> {
    hems_core::soc_trajectory(x, params).e[1..].to_vec()
}

#[derive(Debug, Deserialize)]
struct Row {
    #[allow(dead_code)]
    hour: usize,
    p_grid: f64,
    p_ch: f64,
    p_dis: f64,
    p_c: f64,
}

/// Reads a trajectory CSV; the `soc` column, if present, is ignored.
pub fn read_trajectory(path: &Path) -> Result<DecisionTrajectory<f64>, hems_core::Error> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut x = DecisionTrajectory::zeros(0);
    for row in rdr.deserialize() {
        let r: Row = row?;
        x.p_grid.push(r.p_grid);
        x.p_ch.push(r.p_ch);
        x.p_dis.push(r.p_dis);
        x.p_c.push(r.p_c);
    }
    if x.is_empty() {
        return Err(hems_core::Error::EmptyHorizon);
    }
    Ok(x)
}
