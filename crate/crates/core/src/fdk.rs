//! Classical FDK building blocks and the full weighted-filtered-backprojected
//! pipeline with a final ReLU.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::par::for_each_chunk2;
use crate::projector::{fdk_backproject, DistanceWeight};
use crate::{Error, Fft, Geometry, Matrix, ProjectionStack, Result, Volume};

/// Detector weights `w(s, v)`, `N_s × N_v`, shared by all projections.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(pub Matrix);

/// Real frequency responses, one row per projection: `M × L`, where `L` is
/// the filtering length (`N_s`, or `2·N_s` for zero-padded filtering). Columns
/// follow FFT ordering: DC, positive frequencies, then negative ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank(pub Matrix);

impl FilterBank {
    pub fn len(&self) -> usize {
        self.0.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, a: f64) -> FilterBank {
        FilterBank(self.0.scaled(a))
    }
}

/// `w(s,v) = sdd / √(sdd² + s² + v²)` at detector-cell centers.
pub fn cosine_weights_classical(geom: &Geometry) -> WeightMatrix {
    let sdd2 = geom.sdd * geom.sdd;
    WeightMatrix(Matrix::from_fn(
        geom.det_shape[0],
        geom.det_shape[1],
        |i, j| {
            let (s, v) = (geom.det_s(i), geom.det_v(j));
            geom.sdd / libm::sqrt(sdd2 + s * s + v * v)
        },
    ))
}

/// `|f_k|` in cycles/mm for an `len`-point DFT at sample spacing `spacing`.
pub fn ramp_frequencies(len: usize, spacing: f64) -> Vec<f64> {
    let df = 1.0 / (len as f64 * spacing);
    (0..len)
        .map(|k| {
            let kk = if k <= len / 2 { k } else { len - k };
            kk as f64 * df
        })
        .collect()
}

/// Ram-Lak response `|f|` over the `N_s` transverse frequencies, every row
/// identical.
pub fn ramp_response(geom: &Geometry) -> FilterBank {
    ramp_bank(geom, geom.det_shape[0])
}

/// Ram-Lak response over `2·N_s` frequencies, for zero-padded filtering.
///
/// This is the DFT of the sampled band-limited ramp kernel
/// `h[0] = 1/(4Δ²)`, `h[j] = −1/(πjΔ)²` for odd `j`, zero for even `j`,
/// times `Δ`. It agrees with `|f_k|` except near DC, where it keeps the
/// small positive response that the sampled `|f|` drops; padded filtering
/// with it is exactly linear convolution with the kernel.
pub fn ramp_response_padded(geom: &Geometry) -> FilterBank {
    let n = 2 * geom.det_shape[0];
    let d = geom.det_spacing[0];
    let fft = Fft::new(n);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let j = if k <= n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            let h = if k == 0 {
                0.25 / (d * d)
            } else if (j as i64) % 2 != 0 {
                -1.0 / (PI * j * d * PI * j * d)
            } else {
                0.0
            };
            Complex64::new(h * d, 0.0)
        })
        .collect();
    fft.forward(&mut buf);
    FilterBank(Matrix::from_fn(geom.n_angles, n, |_, k| buf[k].re))
}

fn ramp_bank(geom: &Geometry, len: usize) -> FilterBank {
    let row = ramp_frequencies(len, geom.det_spacing[0]);
    FilterBank(Matrix::from_fn(geom.n_angles, len, |_, k| row[k]))
}

/// `p_w(θ_m, s, v) = w(s, v) · p(θ_m, s, v)`.
pub fn apply_weighting(stack: &ProjectionStack, w: &WeightMatrix) -> Result<ProjectionStack> {
    let [_, ns, nv] = stack.shape();
    if w.0.shape() != (ns, nv) {
        return Err(Error::dim(format!(
            "weight matrix {:?} does not match detector {ns}x{nv}",
            w.0.shape()
        )));
    }
    let weights = w.0.as_slice();
    let mut out = stack.clone();
    for proj in out.as_mut_slice().chunks_exact_mut(ns * nv) {
        for (p, &wv) in proj.iter_mut().zip(weights) {
            *p *= wv;
        }
    }
    Ok(out)
}

pub(crate) fn check_bank(stack_shape: [usize; 3], bank: &FilterBank) -> Result<()> {
    let [m, ns, _] = stack_shape;
    let (rows, cols) = bank.0.shape();
    if rows != m || (cols != ns && cols != 2 * ns) {
        return Err(Error::dim(format!(
            "filter bank {rows}x{cols} does not match {m} projections of width {ns} \
             (expected {ns} or {} columns)",
            2 * ns
        )));
    }
    Ok(())
}

/// Filters every detector row of one projection along `s`:
/// `out = Re F⁻¹{ h ⊙ F{inp} }`, zero-padding to `fft.len()` when it exceeds
/// `ns`. `buf` is scratch of length `fft.len()`.
pub(crate) fn filter_projection(
    fft: &Fft,
    h: &[f64],
    inp: &[f64],
    out: &mut [f64],
    ns: usize,
    nv: usize,
    buf: &mut [Complex64],
) {
    for v in 0..nv {
        for b in buf.iter_mut() {
            *b = Complex64::new(0.0, 0.0);
        }
        for i in 0..ns {
            buf[i].re = inp[i * nv + v];
        }
        fft.forward(buf);
        for (b, &hk) in buf.iter_mut().zip(h) {
            *b *= hk;
        }
        fft.inverse(buf);
        for i in 0..ns {
            out[i * nv + v] = buf[i].re;
        }
    }
}

/// Fourier-domain filtering along `s`, one response per projection.
///
/// With an `N_s`-column bank this is circular convolution of length `N_s`;
/// with a `2·N_s`-column bank each row is zero-padded to `2·N_s` first.
pub fn apply_filter_fft(stack: &ProjectionStack, bank: &FilterBank) -> Result<ProjectionStack> {
    let shape = stack.shape();
    check_bank(shape, bank)?;
    let [_, ns, nv] = shape;
    let len = bank.len();
    let fft = Fft::new(len);
    let mut out = ProjectionStack::zeros(stack.geometry());
    let input = stack.as_slice();
    let mut scratch = vec![Complex64::new(0.0, 0.0); shape[0] * len];
    for_each_chunk2(
        out.as_mut_slice(),
        ns * nv,
        &mut scratch,
        len,
        |m, proj, buf| {
            let inp = &input[m * ns * nv..(m + 1) * ns * nv];
            filter_projection(&fft, bank.0.row(m), inp, proj, ns, nv, buf);
        },
    );
    Ok(out)
}

/// Reconstruction result: the backprojected field and its ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub pre_relu: Volume,
    pub output: Volume,
}

/// `ReLU( B · F⁻¹ H F · (W ⊙ P) )`.
pub fn fdk_reconstruct(
    geom: &Geometry,
    stack: &ProjectionStack,
    w: &WeightMatrix,
    bank: &FilterBank,
    weight: DistanceWeight,
) -> Result<Reconstruction> {
    let weighted = apply_weighting(stack, w)?;
    let filtered = apply_filter_fft(&weighted, bank)?;
    let pre_relu = fdk_backproject(geom, &filtered, weight)?;
    let output = pre_relu.map(|v| v.max(0.0));
    Ok(Reconstruction { pre_relu, output })
}

/// Textbook FDK: classical cosine weights and the Ram-Lak ramp.
pub fn classical_fdk(
    geom: &Geometry,
    stack: &ProjectionStack,
    pad2x: bool,
    weight: DistanceWeight,
) -> Result<Reconstruction> {
    let bank = if pad2x {
        ramp_response_padded(geom)
    } else {
        ramp_response(geom)
    };
    fdk_reconstruct(geom, stack, &cosine_weights_classical(geom), &bank, weight)
}
