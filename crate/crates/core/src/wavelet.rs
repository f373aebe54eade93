//! Orthonormal 2D Haar (db1) transform, fixed at two levels.
//!
//! One 1D step maps a pair `(a, b)` to `((a+b)/√2, (a−b)/√2)`, so analysis is
//! an orthogonal matrix and synthesis is its transpose. Band names give the
//! filter along the row index first, then along the column index: `lh` is
//! low-pass down the rows and high-pass across the columns.
//!
//! Only the level-2 approximation band is trainable. [`reconstruct_from_ll`]
//! and [`project_to_ll`] are the zero-detail synthesis and its adjoint; they
//! reduce to spreading each coefficient over a 4×4 block (times ¼) and
//! summing a 4×4 block (times ¼).

use alloc::format;

use crate::{Error, Matrix, Result};

/// Detail bands of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct Details {
    pub lh: Matrix,
    pub hl: Matrix,
    pub hh: Matrix,
}

/// Two-level decomposition of an `R×C` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid2 {
    /// `R/4 × C/4` approximation.
    pub ll2: Matrix,
    /// `R/4 × C/4` each.
    pub level2: Details,
    /// `R/2 × C/2` each.
    pub level1: Details,
}

impl WaveletPyramid2 {
    /// Pyramid holding `ll2` with every detail band zero.
    pub fn from_ll(ll2: Matrix) -> Self {
        let (r, c) = ll2.shape();
        let zeros = |r, c| Details {
            lh: Matrix::zeros(r, c),
            hl: Matrix::zeros(r, c),
            hh: Matrix::zeros(r, c),
        };
        WaveletPyramid2 {
            level2: zeros(r, c),
            level1: zeros(2 * r, 2 * c),
            ll2,
        }
    }

    /// Shape of the matrix this pyramid synthesizes to.
    pub fn output_shape(&self) -> (usize, usize) {
        (self.ll2.rows() * 4, self.ll2.cols() * 4)
    }

    /// Sum of squares over all bands.
    pub fn energy(&self) -> f64 {
        let d = |b: &Details| b.lh.dot(&b.lh) + b.hl.dot(&b.hl) + b.hh.dot(&b.hh);
        self.ll2.dot(&self.ll2) + d(&self.level2) + d(&self.level1)
    }

    /// Inner product with another pyramid, band by band.
    pub fn dot(&self, other: &WaveletPyramid2) -> f64 {
        let d = |a: &Details, b: &Details| a.lh.dot(&b.lh) + a.hl.dot(&b.hl) + a.hh.dot(&b.hh);
        self.ll2.dot(&other.ll2) + d(&self.level2, &other.level2) + d(&self.level1, &other.level1)
    }
}

fn check_divisible(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || !rows.is_multiple_of(4) || !cols.is_multiple_of(4) {
        return Err(Error::dim(format!(
            "level-2 Haar needs dims divisible by 4, got {rows}x{cols}"
        )));
    }
    Ok(())
}

fn analyze(x: &Matrix) -> (Matrix, Details) {
    let (r, c) = (x.rows() / 2, x.cols() / 2);
    let mut ll = Matrix::zeros(r, c);
    let mut lh = Matrix::zeros(r, c);
    let mut hl = Matrix::zeros(r, c);
    let mut hh = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let a = x.get(2 * i, 2 * j);
            let b = x.get(2 * i, 2 * j + 1);
            let cc = x.get(2 * i + 1, 2 * j);
            let d = x.get(2 * i + 1, 2 * j + 1);
            ll.set(i, j, 0.5 * (a + b + cc + d));
            lh.set(i, j, 0.5 * (a - b + cc - d));
            hl.set(i, j, 0.5 * (a + b - cc - d));
            hh.set(i, j, 0.5 * (a - b - cc + d));
        }
    }
    (ll, Details { lh, hl, hh })
}

fn synthesize(ll: &Matrix, det: &Details) -> Matrix {
    let (r, c) = ll.shape();
    let mut x = Matrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let (s, lh, hl, hh) = (
                ll.get(i, j),
                det.lh.get(i, j),
                det.hl.get(i, j),
                det.hh.get(i, j),
            );
            x.set(2 * i, 2 * j, 0.5 * (s + lh + hl + hh));
            x.set(2 * i, 2 * j + 1, 0.5 * (s - lh + hl - hh));
            x.set(2 * i + 1, 2 * j, 0.5 * (s + lh - hl - hh));
            x.set(2 * i + 1, 2 * j + 1, 0.5 * (s - lh - hl + hh));
        }
    }
    x
}

/// Two-level orthonormal Haar analysis.
pub fn dwt2_level2(x: &Matrix) -> Result<WaveletPyramid2> {
    check_divisible(x.rows(), x.cols())?;
    let (ll1, level1) = analyze(x);
    let (ll2, level2) = analyze(&ll1);
    Ok(WaveletPyramid2 {
        ll2,
        level2,
        level1,
    })
}

/// Exact inverse (and adjoint) of [`dwt2_level2`].
pub fn idwt2_level2(p: &WaveletPyramid2) -> Result<Matrix> {
    let (r, c) = p.ll2.shape();
    let same = |d: &Details, r: usize, c: usize| {
        d.lh.shape() == (r, c) && d.hl.shape() == (r, c) && d.hh.shape() == (r, c)
    };
    if r == 0 || c == 0 || !same(&p.level2, r, c) || !same(&p.level1, 2 * r, 2 * c) {
        return Err(Error::dim("inconsistent wavelet band shapes"));
    }
    let ll1 = synthesize(&p.ll2, &p.level2);
    Ok(synthesize(&ll1, &p.level1))
}

/// Synthesis from the level-2 approximation alone, all details zero.
pub fn reconstruct_from_ll(ll2: &Matrix, out_shape: (usize, usize)) -> Result<Matrix> {
    let (rows, cols) = out_shape;
    check_divisible(rows, cols)?;
    if ll2.shape() != (rows / 4, cols / 4) {
        return Err(Error::dim(format!(
            "approximation band {:?} does not fit output {rows}x{cols}",
            ll2.shape()
        )));
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| {
        0.25 * ll2.get(r / 4, c / 4)
    }))
}

/// Level-2 approximation band of `x`; adjoint of [`reconstruct_from_ll`].
pub fn project_to_ll(x: &Matrix) -> Result<Matrix> {
    check_divisible(x.rows(), x.cols())?;
    let (r, c) = (x.rows() / 4, x.cols() / 4);
    let mut ll = Matrix::zeros(r, c);
    for i in 0..x.rows() {
        let row = x.row(i);
        for (bj, block) in row.chunks_exact(4).enumerate() {
            let s: f64 = block.iter().sum();
            let cur = ll.get(i / 4, bj);
            ll.set(i / 4, bj, cur + s);
        }
    }
    Ok(ll.scaled(0.25))
}
