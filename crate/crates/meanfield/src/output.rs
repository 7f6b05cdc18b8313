use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{AppError, Result};

/// One line of `results.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub replication: usize,
    pub t: f64,
    pub mean_f_distance: f64,
    pub mean_euclid_distance: f64,
    pub w1_converted: f64,
    pub bound_theorem: f64,
    pub second_moment_particles: f64,
    pub second_moment_nonlinear: f64,
    pub upsilon_estimate: f64,
}

impl ResultRow {
    pub fn all_finite(&self) -> bool {
        [
            self.t,
            self.mean_f_distance,
            self.mean_euclid_distance,
            self.w1_converted,
            self.bound_theorem,
            self.second_moment_particles,
            self.second_moment_nonlinear,
            self.upsilon_estimate,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    w.flush().map_err(|e| AppError::io(path, e))
}
