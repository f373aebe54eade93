//! Cone-beam projection operators.
//!
//! * [`forward_project`]: ray-driven line integrals with trilinear sampling.
//! * [`fdk_backproject`]: voxel-driven backprojection `B` with bilinear
//!   detector interpolation and FDK distance weighting.
//! * [`backproject_adjoint`]: the exact transpose `Bᵀ`, built from the same
//!   per-voxel footprint as `B`.

use alloc::format;
use alloc::vec::Vec;

use crate::par::for_each_chunk;
use crate::{Error, Geometry, ProjectionStack, Result, Volume};

/// Where a voxel lands on the detector for one projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorHit {
    /// Transverse detector coordinate, mm.
    pub s: f64,
    /// Axial detector coordinate, mm.
    pub v: f64,
    /// Distance from the source to the voxel's plane parallel to the detector, mm.
    pub u_dist: f64,
}

/// Maps a point (mm, isocenter at the origin) onto the detector of projection
/// `m`. Returns `None` when the point is at or behind the source plane.
pub fn voxel_to_detector(geom: &Geometry, m: usize, xyz: [f64; 3]) -> Option<DetectorHit> {
    let t = geom.angle(m);
    let (c, s) = (libm::cos(t), libm::sin(t));
    let [x, y, z] = xyz;
    let u = geom.sid - x * c - y * s;
    if u <= 0.0 {
        return None;
    }
    Some(DetectorHit {
        s: geom.sdd * (-x * s + y * c) / u,
        v: geom.sdd * z / u,
        u_dist: u,
    })
}

/// Per-voxel distance weight applied during backprojection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DistanceWeight {
    /// `½ · sid · sdd / U²`: the FDK distance weight for detector
    /// coordinates measured on the physical detector, with the ½ full-scan
    /// redundancy factor.
    #[default]
    Fdk,
    /// Unweighted sum `Σ_m p(θ_m, s, v)·Δθ`.
    Unit,
}

impl DistanceWeight {
    pub fn from_plain_flag(plain: bool) -> Self {
        if plain {
            DistanceWeight::Unit
        } else {
            DistanceWeight::Fdk
        }
    }
}

// Bilinear read of one voxel from one projection: cells (i0, j0), (i0+1, j0),
// (i0, j0+1), (i0+1, j0+1) with weights `w`, the whole read scaled by `scale`.
struct Footprint {
    i0: isize,
    j0: isize,
    w: [f64; 4],
    scale: f64,
}

struct Footprinter {
    sid: f64,
    sdd: f64,
    inv_ds: f64,
    inv_dv: f64,
    cs: f64,
    cv: f64,
    ns: isize,
    nv: isize,
    dtheta: f64,
    weight: DistanceWeight,
}

impl Footprinter {
    fn new(geom: &Geometry, weight: DistanceWeight) -> Self {
        Footprinter {
            sid: geom.sid,
            sdd: geom.sdd,
            inv_ds: 1.0 / geom.det_spacing[0],
            inv_dv: 1.0 / geom.det_spacing[1],
            cs: (geom.det_shape[0] as f64 - 1.0) * 0.5,
            cv: (geom.det_shape[1] as f64 - 1.0) * 0.5,
            ns: geom.det_shape[0] as isize,
            nv: geom.det_shape[1] as isize,
            dtheta: geom.delta_theta(),
            weight,
        }
    }

    #[inline]
    fn footprint(&self, (c, s): (f64, f64), x: f64, y: f64, z: f64) -> Option<Footprint> {
        let u = self.sid - x * c - y * s;
        if u <= 0.0 {
            return None;
        }
        let inv_u = 1.0 / u;
        let fs = self.sdd * (-x * s + y * c) * inv_u * self.inv_ds + self.cs;
        let fv = self.sdd * z * inv_u * self.inv_dv + self.cv;
        let (fi, fj) = (libm::floor(fs), libm::floor(fv));
        let (i0, j0) = (fi as isize, fj as isize);
        if i0 < -1 || j0 < -1 || i0 >= self.ns || j0 >= self.nv {
            return None;
        }
        let (a, b) = (fs - fi, fv - fj);
        let scale = match self.weight {
            DistanceWeight::Fdk => 0.5 * self.sid * self.sdd * inv_u * inv_u * self.dtheta,
            DistanceWeight::Unit => self.dtheta,
        };
        Some(Footprint {
            i0,
            j0,
            w: [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b],
            scale,
        })
    }

    // Flat detector offsets (into one projection) paired with weights;
    // out-of-range cells are dropped.
    #[inline]
    fn cells(&self, f: &Footprint) -> [(usize, f64); 4] {
        let mut out = [(0usize, 0.0f64); 4];
        for (k, slot) in out.iter_mut().enumerate() {
            let i = f.i0 + (k & 1) as isize;
            let j = f.j0 + (k >> 1) as isize;
            if i >= 0 && j >= 0 && i < self.ns && j < self.nv {
                *slot = ((i * self.nv + j) as usize, f.w[k]);
            }
        }
        out
    }
}

fn check_volume(geom: &Geometry, vol: &Volume) -> Result<()> {
    if vol.shape() != geom.vol_shape {
        return Err(Error::dim(format!(
            "volume shape {:?} does not match geometry {:?}",
            vol.shape(),
            geom.vol_shape
        )));
    }
    Ok(())
}

fn check_stack(geom: &Geometry, stack: &ProjectionStack) -> Result<()> {
    if stack.len() != geom.stack_len() || stack.geometry().det_shape != geom.det_shape {
        return Err(Error::dim("projection stack does not match geometry"));
    }
    Ok(())
}

fn voxel_axes(geom: &Geometry) -> [Vec<f64>; 3] {
    core::array::from_fn(|a| {
        (0..geom.vol_shape[a])
            .map(|i| geom.voxel_coord(a, i))
            .collect()
    })
}

/// `f(x,y,z) = Σ_m w_dist · p(θ_m, s, v) · Δθ`, bilinear in `(s, v)`; cells
/// off the detector read as zero.
pub fn fdk_backproject(
    geom: &Geometry,
    stack: &ProjectionStack,
    weight: DistanceWeight,
) -> Result<Volume> {
    check_stack(geom, stack)?;
    let fp = Footprinter::new(geom, weight);
    let trig = geom.trig();
    let [xs, ys, zs] = voxel_axes(geom);
    let [nx, ny, _] = geom.vol_shape;
    let ndet = geom.n_det();
    let data = stack.as_slice();
    let mut vol = Volume::for_geometry(geom);
    for_each_chunk(vol.as_mut_slice(), nx * ny, |k, slab| {
        let z = zs[k];
        for (m, &cs) in trig.iter().enumerate() {
            let proj = &data[m * ndet..(m + 1) * ndet];
            for (iy, &y) in ys.iter().enumerate() {
                let row = &mut slab[iy * nx..(iy + 1) * nx];
                for (ix, &x) in xs.iter().enumerate() {
                    if let Some(f) = fp.footprint(cs, x, y, z) {
                        let acc: f64 = fp.cells(&f).iter().map(|&(o, w)| w * proj[o]).sum();
                        row[ix] += f.scale * acc;
                    }
                }
            }
        }
    });
    Ok(vol)
}

/// `Bᵀ · vol`: every voxel scatters `value · scale · weight` into the cells
/// [`fdk_backproject`] reads it from.
pub fn backproject_adjoint(
    geom: &Geometry,
    vol: &Volume,
    weight: DistanceWeight,
) -> Result<ProjectionStack> {
    check_volume(geom, vol)?;
    let fp = Footprinter::new(geom, weight);
    let trig = geom.trig();
    let [xs, ys, zs] = voxel_axes(geom);
    let values = vol.as_slice();
    let mut out = ProjectionStack::zeros(geom);
    for_each_chunk(out.as_mut_slice(), geom.n_det(), |m, proj| {
        let cs = trig[m];
        let mut idx = 0;
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    let val = values[idx];
                    idx += 1;
                    if val == 0.0 {
                        continue;
                    }
                    if let Some(f) = fp.footprint(cs, x, y, z) {
                        let sv = f.scale * val;
                        for (o, w) in fp.cells(&f) {
                            proj[o] += w * sv;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Line integrals with the default step, half the smallest voxel spacing.
pub fn forward_project(geom: &Geometry, vol: &Volume) -> Result<ProjectionStack> {
    let step = 0.5
        * geom
            .vol_spacing
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
    forward_project_with_step(geom, vol, step)
}

/// Line integral along each source → detector-cell ray: midpoint samples at
/// most `step` mm apart, trilinear interpolation between voxel centers (zero
/// outside the grid), summed times the sample spacing.
pub fn forward_project_with_step(
    geom: &Geometry,
    vol: &Volume,
    step: f64,
) -> Result<ProjectionStack> {
    check_volume(geom, vol)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ray step must be positive, got {step}"
        )));
    }
    let trig = geom.trig();
    let [ns, nv] = geom.det_shape;
    let sampler = Trilinear::new(geom, vol);
    let mut out = ProjectionStack::zeros(geom);
    for_each_chunk(out.as_mut_slice(), ns * nv, |m, proj| {
        let (c, s) = trig[m];
        let src = [geom.sid * c, geom.sid * s, 0.0];
        let det_center = [src[0] - geom.sdd * c, src[1] - geom.sdd * s, 0.0];
        for i in 0..ns {
            let ds = geom.det_s(i);
            for j in 0..nv {
                let dv = geom.det_v(j);
                let end = [det_center[0] - ds * s, det_center[1] + ds * c, dv];
                proj[i * nv + j] = sampler.integrate(src, end, step);
            }
        }
    });
    Ok(out)
}

struct Trilinear<'a> {
    vol: &'a Volume,
    shape: [usize; 3],
    inv_spacing: [f64; 3],
    center: [f64; 3],
    // support of the interpolant, mm
    lo: [f64; 3],
    hi: [f64; 3],
}

impl<'a> Trilinear<'a> {
    fn new(geom: &Geometry, vol: &'a Volume) -> Self {
        let shape = geom.vol_shape;
        let sp = geom.vol_spacing;
        let center: [f64; 3] = core::array::from_fn(|a| (shape[a] as f64 - 1.0) * 0.5);
        let hi: [f64; 3] = core::array::from_fn(|a| (center[a] + 1.0) * sp[a]);
        Trilinear {
            vol,
            shape,
            inv_spacing: core::array::from_fn(|a| 1.0 / sp[a]),
            center,
            lo: core::array::from_fn(|a| -hi[a]),
            hi,
        }
    }

    #[inline]
    fn sample(&self, p: [f64; 3]) -> f64 {
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        let mut interior = true;
        for a in 0..3 {
            let f = p[a] * self.inv_spacing[a] + self.center[a];
            // truncation is floor for f ≥ 0, and f < 0 only touches index 0
            let fl = if f >= 0.0 {
                (f as isize) as f64
            } else {
                libm::floor(f)
            };
            base[a] = fl as isize;
            frac[a] = f - fl;
            interior &= base[a] >= 0 && base[a] + 1 < self.shape[a] as isize;
        }
        if interior {
            return self.sample_interior(base, frac);
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let hi = (corner >> a) & 1;
                let i = base[a] + hi as isize;
                if i < 0 || i >= self.shape[a] as isize {
                    inside = false;
                    break;
                }
                idx[a] = i as usize;
                w *= if hi == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if inside && w != 0.0 {
                acc += w * self.vol.get(idx[0], idx[1], idx[2]);
            }
        }
        acc
    }

    // All eight corners in range.
    #[inline]
    fn sample_interior(&self, base: [isize; 3], f: [f64; 3]) -> f64 {
        let [nx, ny, _] = self.shape;
        let data = self.vol.as_slice();
        let i0 = (base[2] as usize * ny + base[1] as usize) * nx + base[0] as usize;
        let (sy, sz) = (nx, nx * ny);
        let g = [1.0 - f[0], f[0]];
        let h = [1.0 - f[1], f[1]];
        let k = [1.0 - f[2], f[2]];
        let mut acc = 0.0;
        for corner in 0..8 {
            let (cx, cy, cz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            acc += g[cx] * h[cy] * k[cz] * data[i0 + cx + cy * sy + cz * sz];
        }
        acc
    }

    fn integrate(&self, from: [f64; 3], to: [f64; 3], step: f64) -> f64 {
        let d: [f64; 3] = core::array::from_fn(|a| to[a] - from[a]);
        let len = libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        // slab clip of the parametric segment t ∈ [0, 1]
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for a in 0..3 {
            if d[a].abs() < 1e-300 {
                if from[a] < self.lo[a] || from[a] > self.hi[a] {
                    return 0.0;
                }
                continue;
            }
            let ta = (self.lo[a] - from[a]) / d[a];
            let tb = (self.hi[a] - from[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if t1 <= t0 {
            return 0.0;
        }
        let seg = (t1 - t0) * len;
        let n = libm::ceil(seg / step).max(1.0) as usize;
        let dt = (t1 - t0) / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let t = t0 + (k as f64 + 0.5) * dt;
            acc += self.sample([from[0] + t * d[0], from[1] + t * d[1], from[2] + t * d[2]]);
        }
        acc * dt * len
    }
}
