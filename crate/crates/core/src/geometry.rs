use alloc::format;

use crate::{Error, Result};

/// Circular-orbit cone-beam acquisition.
///
/// The source sits at `(sid·cos θ, sid·sin θ, 0)` and the flat detector faces
/// it through the isocenter at distance `sdd` from the source. Detector cell
/// `(i, j)` has its center at
/// `s = (i − (N_s−1)/2)·Δs`, `v = (j − (N_v−1)/2)·Δv`; voxel `(i, j, k)` has its
/// center at `((i − (N_x−1)/2)·Δx, …)`, so the isocenter is the volume center.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Geometry {
    pub n_angles: usize,
    /// Radians, `2π` for a full scan.
    pub angular_range: f64,
    /// Source to isocenter, mm.
    pub sid: f64,
    /// Source to detector, mm.
    pub sdd: f64,
    /// `(N_s, N_v)`, transverse then axial.
    pub det_shape: [usize; 2],
    /// `(Δs, Δv)`, mm.
    pub det_spacing: [f64; 2],
    /// `(N_x, N_y, N_z)`.
    pub vol_shape: [usize; 3],
    /// `(Δx, Δy, Δz)`, mm.
    pub vol_spacing: [f64; 3],
}

impl Geometry {
    /// Acquisition geometry used for the published experiments.
    pub fn table1() -> Self {
        Geometry {
            n_angles: 400,
            angular_range: core::f64::consts::TAU,
            sid: 1200.0,
            sdd: 1500.0,
            det_shape: [800, 800],
            det_spacing: [0.5, 0.5],
            vol_shape: [512, 512, 512],
            vol_spacing: [0.5, 0.5, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidGeometry(msg));
        if !(self.sid.is_finite() && self.sid > 0.0) {
            return bad(format!("sid must be positive, got {}", self.sid));
        }
        if !(self.sdd.is_finite() && self.sdd > self.sid) {
            return bad(format!(
                "sdd must exceed sid, got sdd={} sid={}",
                self.sdd, self.sid
            ));
        }
        if !(self.angular_range.is_finite() && self.angular_range > 0.0) {
            return bad(format!(
                "angular_range must be positive, got {}",
                self.angular_range
            ));
        }
        let counts = [
            ("n_angles", self.n_angles),
            ("det_shape[0]", self.det_shape[0]),
            ("det_shape[1]", self.det_shape[1]),
            ("vol_shape[0]", self.vol_shape[0]),
            ("vol_shape[1]", self.vol_shape[1]),
            ("vol_shape[2]", self.vol_shape[2]),
        ];
        for (name, n) in counts {
            if n < 4 {
                return bad(format!("{name} must be at least 4, got {n}"));
            }
        }
        for (name, n) in &counts[..3] {
            if n % 4 != 0 {
                return bad(format!("{name} must be divisible by 4, got {n}"));
            }
        }
        let spacings = self.det_spacing.iter().chain(self.vol_spacing.iter());
        for &d in spacings {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("spacings must be positive, got {d}"));
            }
        }
        Ok(())
    }

    /// Angular increment `Δθ`.
    pub fn delta_theta(&self) -> f64 {
        self.angular_range / self.n_angles as f64
    }

    /// Angle of projection `m`; uniform, starting at zero.
    pub fn angle(&self, m: usize) -> f64 {
        m as f64 * self.delta_theta()
    }

    pub fn n_det(&self) -> usize {
        self.det_shape[0] * self.det_shape[1]
    }

    pub fn n_vox(&self) -> usize {
        self.vol_shape.iter().product()
    }

    pub fn stack_len(&self) -> usize {
        self.n_angles * self.n_det()
    }

    /// Transverse detector coordinate of cell column `i`, mm.
    pub fn det_s(&self, i: usize) -> f64 {
        (i as f64 - (self.det_shape[0] as f64 - 1.0) * 0.5) * self.det_spacing[0]
    }

    /// Axial detector coordinate of cell row `j`, mm.
    pub fn det_v(&self, j: usize) -> f64 {
        (j as f64 - (self.det_shape[1] as f64 - 1.0) * 0.5) * self.det_spacing[1]
    }

    /// Center of voxel index `idx` along `axis`, mm.
    pub fn voxel_coord(&self, axis: usize, idx: usize) -> f64 {
        (idx as f64 - (self.vol_shape[axis] as f64 - 1.0) * 0.5) * self.vol_spacing[axis]
    }

    pub(crate) fn trig(&self) -> alloc::vec::Vec<(f64, f64)> {
        (0..self.n_angles)
            .map(|m| {
                let t = self.angle(m);
                (libm::cos(t), libm::sin(t))
            })
            .collect()
    }
}
