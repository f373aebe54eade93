//! Text and image formats: `geo.json`, phantom spec lists, CSV logs and
//! metric tables, and 16-bit PGM slices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wsfdk_core::metrics::MetricReport;
use wsfdk_core::sim::EllipsoidSpec;
use wsfdk_core::training::LogRow;
use wsfdk_core::{Geometry, Matrix};

use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads and validates a geometry file; keys are the [`Geometry`] field names.
pub fn load_geometry(path: &Path) -> Result<Geometry, CliError> {
    let geom: Geometry = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    geom.validate()?;
    Ok(geom)
}

/// Reads a JSON list of ellipsoids and checks each one.
pub fn load_specs(path: &Path) -> Result<Vec<EllipsoidSpec>, CliError> {
    let specs: Vec<EllipsoidSpec> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if specs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: empty ellipsoid list",
            path.display()
        )));
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate()
            .map_err(|e| CliError::Data(format!("{}: ellipsoid {i}: {e}", path.display())))?;
    }
    Ok(specs)
}

/// Losses are written in shortest round-trip form so logs compare exactly.
pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("epoch,sample_index,train_loss,val_loss\n");
    for r in rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            r.epoch, r.sample_index, r.train_loss, val
        )
        .unwrap();
    }
    out
}

/// Six decimals; `inf` for an exact match.
pub fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

pub fn metrics_csv(rows: &[MetricReport]) -> String {
    let mut out = String::from("view,slice_index,psnr_db,ssim\n");
    for r in rows {
        let idx = r.slice_index.map(|i| i.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            r.view.as_str(),
            idx,
            fmt_metric(r.psnr_db),
            fmt_metric(r.ssim)
        )
        .unwrap();
    }
    out
}

pub const PGM_MAXVAL: u16 = 65535;

/// Maps `[lo, hi]` affinely onto `[0, 65535]`, clamping outside. A window
/// with `hi <= lo` maps everything to full scale.
pub fn window_value(v: f64, lo: f64, hi: f64) -> u16 {
    if hi <= lo {
        return PGM_MAXVAL;
    }
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * PGM_MAXVAL as f64).round() as u16
}

/// Binary P5 with 16-bit big-endian samples, first matrix row at the top.
/// Without an explicit window the image's own min–max range is used.
pub fn encode_pgm(img: &Matrix, window: Option<(f64, f64)>) -> Vec<u8> {
    let (lo, hi) = window.unwrap_or_else(|| {
        img.as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    });
    let (rows, cols) = img.shape();
    let mut out = format!("P5\n{cols} {rows}\n{PGM_MAXVAL}\n").into_bytes();
    out.reserve(rows * cols * 2);
    for &v in img.as_slice() {
        out.extend_from_slice(&window_value(v, lo, hi).to_be_bytes());
    }
    out
}

/// Parses `lo,hi`.
pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err("window bounds must be finite".into());
    }
    Ok((lo, hi))
}
