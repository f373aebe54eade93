//! Synthetic data: additive-ellipsoid phantoms and Poisson transmission noise.

use alloc::format;
use alloc::vec::Vec;

use crate::par::for_each_chunk;
use crate::rng::CounterRng;
use crate::{Error, Geometry, ProjectionStack, Result, Volume};

/// Attenuation of the outer ellipsoid of [`shepp3d`], mm⁻¹ (about water).
pub const SHEPP_MU: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EllipsoidSpec {
    /// mm, isocenter at the origin.
    pub center: [f64; 3],
    /// mm, must be positive.
    pub semi_axes: [f64; 3],
    /// Rotation about +z, radians.
    pub euler_z_rotation: f64,
    /// Added attenuation inside the ellipsoid, mm⁻¹.
    pub density: f64,
}

impl EllipsoidSpec {
    pub fn validate(&self) -> Result<()> {
        if self.semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "semi-axes must be positive, got {:?}",
                self.semi_axes
            )));
        }
        let finite = self.center.iter().all(|c| c.is_finite())
            && self.euler_z_rotation.is_finite()
            && self.density.is_finite();
        if !finite {
            return Err(Error::InvalidConfig(
                "ellipsoid fields must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Normalized quadratic form; the point is inside when this is ≤ 1.
    pub fn quadratic_form(&self, p: [f64; 3]) -> f64 {
        let (s, c) = (
            libm::sin(self.euler_z_rotation),
            libm::cos(self.euler_z_rotation),
        );
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let local = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
        (0..3)
            .map(|a| {
                let t = local[a] / self.semi_axes[a];
                t * t
            })
            .sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.quadratic_form(p) <= 1.0
    }

    /// The same ellipsoid rotated by `phi` about the z axis through the origin.
    pub fn rotated_z(&self, phi: f64) -> EllipsoidSpec {
        let (s, c) = (libm::sin(phi), libm::cos(phi));
        let [x, y, z] = self.center;
        EllipsoidSpec {
            center: [c * x - s * y, s * x + c * y, z],
            euler_z_rotation: self.euler_z_rotation + phi,
            ..self.clone()
        }
    }
}

/// Sum of densities of the ellipsoids containing `p`.
pub fn phantom_value(specs: &[EllipsoidSpec], p: [f64; 3]) -> f64 {
    specs
        .iter()
        .filter(|e| e.contains(p))
        .map(|e| e.density)
        .sum()
}

/// Evaluates the phantom at every voxel center.
pub fn phantom_volume(geom: &Geometry, specs: &[EllipsoidSpec]) -> Result<Volume> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig(
            "phantom needs at least one ellipsoid".into(),
        ));
    }
    for e in specs {
        e.validate()?;
    }
    let [nx, ny, _] = geom.vol_shape;
    let mut vol = Volume::for_geometry(geom);
    for_each_chunk(vol.as_mut_slice(), nx * ny, |k, slab| {
        let z = geom.voxel_coord(2, k);
        for iy in 0..ny {
            let y = geom.voxel_coord(1, iy);
            for ix in 0..nx {
                slab[iy * nx + ix] = phantom_value(specs, [geom.voxel_coord(0, ix), y, z]);
            }
        }
    });
    Ok(vol)
}

// (relative density, semi-axes, center, rotation in degrees), in units of the
// volume half-extent: the ten-ellipsoid modified Shepp–Logan head with its
// tilts reduced to rotations about z.
const SHEPP: [(f64, [f64; 3], [f64; 3], f64); 10] = [
    (1.0, [0.6900, 0.920, 0.810], [0.0, 0.0, 0.0], 0.0),
    (-0.8, [0.6624, 0.874, 0.780], [0.0, -0.0184, 0.0], 0.0),
    (-0.2, [0.1100, 0.310, 0.220], [0.22, 0.0, 0.0], -18.0),
    (-0.2, [0.1600, 0.410, 0.280], [-0.22, 0.0, 0.0], 18.0),
    (0.1, [0.2100, 0.250, 0.410], [0.0, 0.35, -0.15], 0.0),
    (0.1, [0.0460, 0.046, 0.050], [0.0, 0.1, 0.25], 0.0),
    (0.1, [0.0460, 0.046, 0.050], [0.0, -0.1, 0.25], 0.0),
    (0.1, [0.0460, 0.023, 0.050], [-0.08, -0.605, 0.0], 0.0),
    (0.1, [0.0230, 0.023, 0.020], [0.0, -0.606, 0.0], 0.0),
    (0.1, [0.0230, 0.046, 0.020], [0.06, -0.605, 0.0], 0.0),
];

fn half_extent(geom: &Geometry) -> [f64; 3] {
    core::array::from_fn(|a| 0.5 * geom.vol_shape[a] as f64 * geom.vol_spacing[a])
}

/// 3D Shepp–Logan head scaled to the volume's field of view, outer shell
/// at [`SHEPP_MU`].
pub fn shepp3d(geom: &Geometry) -> Vec<EllipsoidSpec> {
    let h = half_extent(geom);
    SHEPP
        .iter()
        .map(|&(rho, axes, center, deg)| EllipsoidSpec {
            center: core::array::from_fn(|a| center[a] * h[a]),
            semi_axes: core::array::from_fn(|a| axes[a] * h[a]),
            euler_z_rotation: deg.to_radians(),
            density: rho * SHEPP_MU,
        })
        .collect()
}

/// Seeded variant of [`shepp3d`]: the outer two shells keep their shape
/// (scaled by a common factor in [0.92, 1.0]); the eight inner features get
/// center offsets up to 4% of the half-extent, semi-axes scaled by
/// [0.8, 1.2], rotations jittered by ±10° and densities scaled by [0.7, 1.3].
pub fn shepp3d_jittered(geom: &Geometry, seed: u64) -> Vec<EllipsoidSpec> {
    let h = half_extent(geom);
    let mut rng = CounterRng::new(seed, 0x5EED_5EED);
    let outer = rng.range(0.92, 1.0);
    shepp3d(geom)
        .into_iter()
        .enumerate()
        .map(|(i, mut e)| {
            if i < 2 {
                e.semi_axes.iter_mut().for_each(|v| *v *= outer);
                e.center.iter_mut().for_each(|v| *v *= outer);
            } else {
                for (a, &half) in h.iter().enumerate() {
                    e.center[a] = e.center[a] * outer + rng.range(-0.04, 0.04) * half;
                    e.semi_axes[a] *= outer * rng.range(0.8, 1.2);
                }
                e.euler_z_rotation += rng.range(-10.0, 10.0).to_radians();
                e.density *= rng.range(0.7, 1.3);
            }
            e
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseConfig {
    /// Mean incident photons per detector cell.
    pub i0: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { i0: 1e5, seed: 0 }
    }
}

/// Beer–Lambert photon noise: `I ~ Poisson(i0·exp(−p))`,
/// `p′ = −ln(max(I, 1)/i0)`. Element `k` draws from counter stream `k`.
pub fn add_poisson_noise(stack: &ProjectionStack, cfg: &NoiseConfig) -> Result<ProjectionStack> {
    if !(cfg.i0.is_finite() && cfg.i0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "i0 must be positive, got {}",
            cfg.i0
        )));
    }
    if let Some((index, &value)) = stack.as_slice().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeLineIntegral { index, value });
    }
    const CHUNK: usize = 4096;
    let input = stack.as_slice();
    let mut out = stack.clone();
    let (i0, seed) = (cfg.i0, cfg.seed);
    for_each_chunk(out.as_mut_slice(), CHUNK, |c, chunk| {
        for (k, v) in chunk.iter_mut().enumerate() {
            let idx = c * CHUNK + k;
            let mut rng = CounterRng::new(seed, idx as u64);
            let counts = rng.poisson(i0 * libm::exp(-input[idx])).max(1.0);
            *v = -libm::log(counts / i0);
        }
    });
    Ok(out)
}
