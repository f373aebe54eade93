use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Geometry, Result};

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Dense row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scaled(&self, a: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * a).collect(),
        }
    }

    pub fn dot(&self, other: &Matrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Voxel grid. `data[(z·N_y + y)·N_x + x]`: x fastest, z slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(shape: [usize; 3], spacing: [f64; 3]) -> Self {
        Volume {
            shape,
            spacing,
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Zero volume on the geometry's voxel grid.
    pub fn for_geometry(geom: &Geometry) -> Self {
        Self::zeros(geom.vol_shape, geom.vol_spacing)
    }

    pub fn from_vec(shape: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::dim(format!(
                "volume {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Volume {
            shape,
            spacing,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Whether this volume lives on `geom`'s voxel grid.
    pub fn matches(&self, geom: &Geometry) -> bool {
        self.shape == geom.vol_shape && self.spacing == geom.vol_spacing
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Volume) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Projection data, `data[(m·N_s + s)·N_v + v]`: angle slowest, v fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    geometry: Geometry,
    data: Vec<f64>,
}

impl ProjectionStack {
    pub fn zeros(geometry: &Geometry) -> Self {
        ProjectionStack {
            data: vec![0.0; geometry.stack_len()],
            geometry: geometry.clone(),
        }
    }

    pub fn from_vec(geometry: &Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.stack_len() {
            return Err(Error::dim(format!(
                "projection stack needs {} values, got {}",
                geometry.stack_len(),
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(ProjectionStack {
            geometry: geometry.clone(),
            data,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// `(M, N_s, N_v)`.
    pub fn shape(&self) -> [usize; 3] {
        let g = &self.geometry;
        [g.n_angles, g.det_shape[0], g.det_shape[1]]
    }

    #[inline]
    pub fn index(&self, m: usize, s: usize, v: usize) -> usize {
        let [_, ns, nv] = self.shape();
        (m * ns + s) * nv + v
    }

    #[inline]
    pub fn get(&self, m: usize, s: usize, v: usize) -> f64 {
        self.data[self.index(m, s, v)]
    }

    /// All cells of projection `m` (`N_s·N_v` values, v fastest).
    pub fn projection(&self, m: usize) -> &[f64] {
        let n = self.geometry.n_det();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ProjectionStack {
        ProjectionStack {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &ProjectionStack) -> f64 {
        dot(&self.data, &other.data)
    }
}
