//! PSNR and SSIM, per central slice and per volume.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result, Volume};

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// `10·log10(range² / MSE)`; `+∞` when the inputs are identical.
pub fn psnr(x: &[f64], reference: &[f64], data_range: f64) -> Result<f64> {
    if x.len() != reference.len() || x.is_empty() {
        return Err(Error::dim(format!(
            "psnr inputs have lengths {} and {}",
            x.len(),
            reference.len()
        )));
    }
    if !(data_range.is_finite() && data_range > 0.0) {
        return Err(Error::DataRange(data_range));
    }
    let mse = x
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(data_range * data_range / mse))
}

/// `max − min` of `reference`.
pub fn dynamic_range(reference: &[f64]) -> f64 {
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// Normalized 11-tap Gaussian, σ = 1.5.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = core::array::from_fn(|i| {
        let d = i as f64 - half;
        libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    });
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mirror an out-of-range index back into `[0, n)`, repeating the edge
/// sample (`-1 → 0`, `n → n−1`).
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

// Separable Gaussian blur with symmetric boundaries.
fn blur(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = (0..SSIM_WINDOW)
                .map(|k| w[k] * img[r * cols + reflect(c as isize + k as isize - half, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = (0..SSIM_WINDOW)
                .map(|k| w[k] * tmp[reflect(r as isize + k as isize - half, rows) * cols + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over every pixel with an 11×11 Gaussian window (σ 1.5),
/// `C1 = (0.01·range)²`, `C2 = (0.03·range)²`.
pub fn ssim(x: &Matrix, reference: &Matrix, data_range: f64) -> Result<f64> {
    if x.shape() != reference.shape() {
        return Err(Error::dim(format!(
            "ssim inputs have shapes {:?} and {:?}",
            x.shape(),
            reference.shape()
        )));
    }
    let (rows, cols) = x.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::dim(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {rows}x{cols}"
        )));
    }
    if !(data_range.is_finite() && data_range > 0.0) {
        return Err(Error::DataRange(data_range));
    }
    let w = gaussian_window();
    let a = x.as_slice();
    let b = reference.as_slice();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
    };
    let mu_a = blur(a, rows, cols, &w);
    let mu_b = blur(b, rows, cols, &w);
    let aa = blur(&prod(&|p, _| p * p), rows, cols, &w);
    let bb = blur(&prod(&|_, q| q * q), rows, cols, &w);
    let ab = blur(&prod(&|p, q| p * q), rows, cols, &w);
    let c1 = (SSIM_K1 * data_range) * (SSIM_K1 * data_range);
    let c2 = (SSIM_K2 * data_range) * (SSIM_K2 * data_range);
    let mut total = 0.0;
    for i in 0..rows * cols {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (rows * cols) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Fixed z; rows y, columns x.
    Axial,
    /// Fixed x; rows z, columns y.
    Sagittal,
    /// Fixed y; rows z, columns x.
    Coronal,
    Volume,
}

impl View {
    pub fn as_str(&self) -> &'static str {
        match self {
            View::Axial => "axial",
            View::Sagittal => "sagittal",
            View::Coronal => "coronal",
            View::Volume => "volume",
        }
    }

    pub fn parse(s: &str) -> Option<View> {
        match s {
            "axial" => Some(View::Axial),
            "sagittal" => Some(View::Sagittal),
            "coronal" => Some(View::Coronal),
            "volume" => Some(View::Volume),
            _ => None,
        }
    }

    /// Number of slices along this view's fixed axis.
    pub fn depth(&self, vol: &Volume) -> usize {
        let [nx, ny, nz] = vol.shape();
        match self {
            View::Axial => nz,
            View::Sagittal => nx,
            View::Coronal => ny,
            View::Volume => 1,
        }
    }
}

/// Extracts a 2D slice.
pub fn slice(vol: &Volume, view: View, index: usize) -> Result<Matrix> {
    let [nx, ny, nz] = vol.shape();
    if view == View::Volume || index >= view.depth(vol) {
        return Err(Error::dim(format!(
            "{} slice {index} out of range (depth {})",
            view.as_str(),
            view.depth(vol)
        )));
    }
    Ok(match view {
        View::Axial => Matrix::from_fn(ny, nx, |y, x| vol.get(x, y, index)),
        View::Sagittal => Matrix::from_fn(nz, ny, |z, y| vol.get(index, y, z)),
        View::Coronal => Matrix::from_fn(nz, nx, |z, x| vol.get(x, index, z)),
        View::Volume => unreachable!(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub view: View,
    pub slice_index: Option<usize>,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// PSNR/SSIM on the central axial, sagittal and coronal slices, plus a
/// volume row: whole-volume PSNR and the mean SSIM over all axial slices.
/// The data range is the ground truth's dynamic range.
pub fn view_metrics(recon: &Volume, gt: &Volume) -> Result<Vec<MetricReport>> {
    if recon.shape() != gt.shape() {
        return Err(Error::dim(format!(
            "volume shapes {:?} and {:?} differ",
            recon.shape(),
            gt.shape()
        )));
    }
    let range = dynamic_range(gt.as_slice());
    let mut out = Vec::with_capacity(4);
    for view in [View::Axial, View::Sagittal, View::Coronal] {
        let k = view.depth(gt) / 2;
        let a = slice(recon, view, k)?;
        let b = slice(gt, view, k)?;
        out.push(MetricReport {
            view,
            slice_index: Some(k),
            psnr_db: psnr(a.as_slice(), b.as_slice(), range)?,
            ssim: ssim(&a, &b, range)?,
        });
    }
    let nz = gt.shape()[2];
    let mut ssim_sum = 0.0;
    for z in 0..nz {
        ssim_sum += ssim(
            &slice(recon, View::Axial, z)?,
            &slice(gt, View::Axial, z)?,
            range,
        )?;
    }
    out.push(MetricReport {
        view: View::Volume,
        slice_index: None,
        psnr_db: psnr(recon.as_slice(), gt.as_slice(), range)?,
        ssim: ssim_sum / nz as f64,
    });
    Ok(out)
}
