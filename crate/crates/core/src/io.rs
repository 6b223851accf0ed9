//! CSV and JSON emission. Every rate column is in bits and says so.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::OptimizerResult;
use crate::sumrate::AlphaSample;
use crate::sweep::{Surface, SurfacePoint};

pub const SURFACE_HEADER: &str = "lambda1,lambda2,c1_bits,c2_bits,i_rd_bits,h_scalar_bits,iterations,converged,seed";

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceRow {
    lambda1: f64,
    lambda2: f64,
    c1_bits: f64,
    c2_bits: f64,
    i_rd_bits: f64,
    h_scalar_bits: f64,
    iterations: usize,
    converged: bool,
    seed: u64,
}

fn with_path<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(with_path(path, File::create(path))?))
}

pub fn write_surface_csv<W: Write>(out: W, s: &Surface) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &s.points {
        w.serialize(SurfaceRow {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            c1_bits: p.c1,
            c2_bits: p.c2,
            i_rd_bits: p.i_rd,
            h_scalar_bits: p.h_scalar,
            iterations: p.iterations,
            converged: p.converged,
            seed: p.seed,
        })?;
    }
    if s.points.is_empty() {
        w.write_record(SURFACE_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a surface CSV. The file carries no channel fingerprint or level
/// count, so those come back empty.
pub fn read_surface_csv<R: Read>(input: R) -> Result<Surface> {
    let mut r = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for row in r.deserialize() {
        let row: SurfaceRow = row?;
        points.push(SurfacePoint {
            lambda1: row.lambda1,
            lambda2: row.lambda2,
            c1: row.c1_bits,
            c2: row.c2_bits,
            i_rd: row.i_rd_bits,
            h_scalar: row.h_scalar_bits,
            iterations: row.iterations,
            converged: row.converged,
            seed: row.seed,
            q: None,
        });
    }
    Ok(Surface::from_points(points, String::new(), 0))
}

/// Loads a surface from `.json` (full metadata) or CSV (anything else).
pub fn load_surface(path: &Path) -> Result<Surface> {
    let file = with_path(path, File::open(path))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    } else {
        read_surface_csv(file)
    }
}

pub fn save_surface_csv(path: &Path, s: &Surface) -> Result<()> {
    write_surface_csv(create(path)?, s)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    with_path(path, writeln!(w))?;
    with_path(path, w.flush())
}

pub fn write_trace_csv<W: Write>(out: W, r: &OptimizerResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "lagrangian_bits"])?;
    for (k, v) in r.lagrangian_trace.iter().enumerate() {
        w.serialize((k, v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(path: &Path, r: &OptimizerResult) -> Result<()> {
    write_trace_csv(create(path)?, r)
}

/// `(h_scalar, i_rd)` pairs as produced by the scalar diagnostic.
pub fn write_scalar_csv<W: Write>(out: W, pairs: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h_scalar_bits", "i_rd_bits"])?;
    for p in pairs {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scalar_csv(path: &Path, pairs: &[(f64, f64)]) -> Result<()> {
    write_scalar_csv(create(path)?, pairs)
}

pub fn write_alpha_csv<W: Write>(out: W, samples: &[AlphaSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "c1_target_bits", "c2_target_bits", "sum_rate_bits"])?;
    for a in samples {
        w.serialize((a.alpha, a.c1_target, a.c2_target, a.sum_rate))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_alpha_csv(path: &Path, samples: &[AlphaSample]) -> Result<()> {
    write_alpha_csv(create(path)?, samples)
}
