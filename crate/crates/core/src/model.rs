//! Trainable FDK: cosine weights and per-projection filter responses, each
//! stored only as its level-2 Haar approximation band.

use alloc::format;

use crate::fdk::{
    cosine_weights_classical, fdk_reconstruct, ramp_response, FilterBank, Reconstruction,
    WeightMatrix,
};
use crate::projector::DistanceWeight;
use crate::wavelet::{project_to_ll, reconstruct_from_ll};
use crate::{Error, Geometry, Matrix, ProjectionStack, Result};

/// Level-2 approximation coefficients of the weight matrix (`N_s/4 × N_v/4`)
/// and of the filter bank (`M/4 × N_s/4`). All detail bands are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWaveletParams {
    pub w_train: Matrix,
    pub h_train: Matrix,
}

impl SparseWaveletParams {
    pub fn zeros(geom: &Geometry) -> Self {
        let (w, h) = Self::shapes(geom);
        SparseWaveletParams {
            w_train: Matrix::zeros(w.0, w.1),
            h_train: Matrix::zeros(h.0, h.1),
        }
    }

    /// `((N_s/4, N_v/4), (M/4, N_s/4))`.
    pub fn shapes(geom: &Geometry) -> ((usize, usize), (usize, usize)) {
        let [ns, nv] = geom.det_shape;
        ((ns / 4, nv / 4), (geom.n_angles / 4, ns / 4))
    }

    pub fn len(&self) -> usize {
        self.w_train.len() + self.h_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, geom: &Geometry) -> Result<()> {
        let (w, h) = Self::shapes(geom);
        if self.w_train.shape() != w || self.h_train.shape() != h {
            return Err(Error::dim(format!(
                "parameter shapes {:?}/{:?} do not match geometry ({w:?}/{h:?})",
                self.w_train.shape(),
                self.h_train.shape()
            )));
        }
        Ok(())
    }
}

/// Options that change the reconstruction operator, not its parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelOptions {
    /// Backproject without the FDK distance weight.
    pub plain_backprojection: bool,
}

impl ModelOptions {
    pub fn distance_weight(&self) -> DistanceWeight {
        DistanceWeight::from_plain_flag(self.plain_backprojection)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdkModel {
    pub geom: Geometry,
    pub params: SparseWaveletParams,
    pub options: ModelOptions,
}

/// Parameter accounting against the dense `W` and `H` matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterCount {
    pub trainable: usize,
    pub dense_equivalent: usize,
    pub reduction: f64,
}

impl FdkModel {
    pub fn new(geom: Geometry, params: SparseWaveletParams, options: ModelOptions) -> Result<Self> {
        geom.validate()?;
        params.check(&geom)?;
        Ok(FdkModel {
            geom,
            params,
            options,
        })
    }

    /// Approximation bands of the classical cosine weights and ramp, so the
    /// untrained model is FDK up to the coarse-band truncation.
    pub fn init_from_classical(geom: &Geometry, options: ModelOptions) -> Result<Self> {
        geom.validate()?;
        let w_train = project_to_ll(&cosine_weights_classical(geom).0)?;
        let h_train = project_to_ll(&ramp_response(geom).0)?;
        Self::new(
            geom.clone(),
            SparseWaveletParams { w_train, h_train },
            options,
        )
    }

    /// `(W_rec, H_rec)`: synthesis from the approximation bands.
    pub fn materialize(&self) -> Result<(WeightMatrix, FilterBank)> {
        let [ns, nv] = self.geom.det_shape;
        let w = reconstruct_from_ll(&self.params.w_train, (ns, nv))?;
        let h = reconstruct_from_ll(&self.params.h_train, (self.geom.n_angles, ns))?;
        Ok((WeightMatrix(w), FilterBank(h)))
    }

    pub fn forward(&self, stack: &ProjectionStack) -> Result<Reconstruction> {
        let (w, h) = self.materialize()?;
        fdk_reconstruct(&self.geom, stack, &w, &h, self.options.distance_weight())
    }

    pub fn parameter_count(&self) -> ParameterCount {
        let [ns, nv] = self.geom.det_shape;
        let trainable = self.params.len();
        let dense_equivalent = ns * nv + self.geom.n_angles * ns;
        ParameterCount {
            trainable,
            dense_equivalent,
            reduction: 1.0 - trainable as f64 / dense_equivalent as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> Geometry {
        Geometry {
            n_angles: 120,
            angular_range: core::f64::consts::TAU,
            sid: 300.0,
            sdd: 600.0,
            det_shape: [128, 128],
            det_spacing: [1.0, 1.0],
            vol_shape: [64, 64, 64],
            vol_spacing: [1.0; 3],
        }
    }

    #[test]
    fn table1_parameter_count() {
        let m =
            FdkModel::init_from_classical(&Geometry::table1(), ModelOptions::default()).unwrap();
        let c = m.parameter_count();
        assert_eq!(c.trainable, 60_000);
        assert_eq!(c.dense_equivalent, 960_000);
        assert_eq!(c.reduction, 0.9375);
    }

    #[test]
    fn desk_parameter_count() {
        let m = FdkModel::new(
            desk(),
            SparseWaveletParams::zeros(&desk()),
            ModelOptions::default(),
        )
        .unwrap();
        let c = m.parameter_count();
        assert_eq!(c.trainable, 1984);
        assert_eq!(c.reduction, 0.9375);
    }

    #[test]
    fn init_approximates_cosine_weights() {
        let g = Geometry::table1();
        let m = FdkModel::init_from_classical(&g, ModelOptions::default()).unwrap();
        let (w, h) = m.materialize().unwrap();
        let exact = cosine_weights_classical(&g).0;
        let diff: f64 =
            w.0.as_slice()
                .iter()
                .zip(exact.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        assert!(diff.sqrt() / exact.norm() < 5e-3);
        assert_eq!(h.0.shape(), (400, 800));
        for r in 1..m.params.h_train.rows() {
            assert_eq!(m.params.h_train.row(r), m.params.h_train.row(0));
        }
    }

    #[test]
    fn small_detector_shapes() {
        let mut g = desk();
        g.det_shape = [16, 16];
        let m = FdkModel::init_from_classical(&g, ModelOptions::default()).unwrap();
        assert_eq!(m.params.w_train.shape(), (4, 4));
        assert_eq!(m.params.h_train.shape(), (30, 4));
    }

    #[test]
    fn materialize_roundtrip_and_blocks() {
        let g = desk();
        let m = FdkModel::init_from_classical(&g, ModelOptions::default()).unwrap();
        let (w, h) = m.materialize().unwrap();
        let w2 = project_to_ll(&w.0).unwrap();
        let h2 = project_to_ll(&h.0).unwrap();
        for (a, b) in w2.as_slice().iter().zip(m.params.w_train.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in h2.as_slice().iter().zip(m.params.h_train.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut p = SparseWaveletParams::zeros(&g);
        p.w_train = Matrix::filled(32, 32, 4.0 * 0.8);
        let m = FdkModel::new(g, p, ModelOptions::default()).unwrap();
        let (w, h) = m.materialize().unwrap();
        assert!(w.0.as_slice().iter().all(|&x| (x - 0.8).abs() < 1e-15));
        assert!(h.0.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_wrong_shapes() {
        let g = desk();
        let mut p = SparseWaveletParams::zeros(&g);
        p.h_train = Matrix::zeros(31, 32);
        assert!(FdkModel::new(g, p, ModelOptions::default()).is_err());
    }
}
