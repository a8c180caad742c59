//! Piecewise-linear constitutive model and continuation functions.
//!
//! Water content of a cell is a piecewise-linear function of its hydraulic
//! head, parameterized by the cell's vertical extent: saturated above
//! `z_max`, linear down to the reference head `h_r`, then a shallow tail
//! with slope `φ·α_θ` that is clamped at zero. Relative permeability equals
//! saturation, floored to keep the operator elliptic in dry cells.

use crate::mesh::CellGeometry;

/// Per-region medium parameters.
///
/// The conductivity tensor is diagonal: `[K_xx, K_yy, K_zz]` in m/day.
#[derive(Debug, Clone, Copy)]
pub struct MediumProperties {
    pub conductivity: [f64; 3],
    /// Porosity φ, in (0, 1).
    pub porosity: f64,
    /// Dimensionless water content fraction at the reference head, in (0, 1).
    pub alpha_phi: f64,
    /// Tail slope of the water content curve, 1/m.
    pub alpha_theta: f64,
    /// Specific storage, 1/m.
    pub specific_storage: f64,
    /// Lower bound applied to the relative permeability.
    pub kr_floor: f64,
}

impl MediumProperties {
    pub fn isotropic(k: f64) -> Self {
        MediumProperties {
            conductivity: [k, k, k],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let [kx, ky, kz] = self.conductivity;
        if kx <= 0.0 || ky <= 0.0 || kz <= 0.0 {
            return Err(format!("conductivity must be positive, got {:?}", self.conductivity));
        }
        if !(0.0 < self.porosity && self.porosity < 1.0) {
            return Err(format!("porosity must lie in (0, 1), got {}", self.porosity));
        }
        if !(0.0 < self.alpha_phi && self.alpha_phi < 1.0) {
            return Err(format!("alpha_phi must lie in (0, 1), got {}", self.alpha_phi));
        }
        if self.alpha_theta <= 0.0 {
            return Err(format!("alpha_theta must be positive, got {}", self.alpha_theta));
        }
        if self.specific_storage < 0.0 {
            return Err(format!("specific_storage must be >= 0, got {}", self.specific_storage));
        }
        if !(0.0 < self.kr_floor && self.kr_floor <= 1.0) {
            return Err(format!("kr_floor must lie in (0, 1], got {}", self.kr_floor));
        }
        Ok(())
    }
}

impl Default for MediumProperties {
    fn default() -> Self {
        MediumProperties {
            conductivity: [1.0, 1.0, 1.0],
            porosity: 0.3,
            alpha_phi: 0.01,
            alpha_theta: 1e-3,
            specific_storage: 0.0,
            kr_floor: 1e-6,
        }
    }
}

/// Reference head `h_r`: the head at which the linear branch of the water
/// content curve reaches `φ·α_φ`.
pub fn reference_head(cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    cell.z_min + medium.alpha_phi * (cell.z_max - cell.z_min)
}

/// Volumetric water content θ(h), clamped below at zero.
pub fn water_content(h: f64, cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    let phi = medium.porosity;
    let hr = reference_head(cell, medium);
    if h > cell.z_max {
        phi
    } else if h > hr {
        phi * (h - cell.z_min) / (cell.z_max - cell.z_min)
    } else {
        (phi * (medium.alpha_phi - medium.alpha_theta * (hr - h))).max(0.0)
    }
}

/// One-sided derivative dθ/dh of the branch containing `h`. Branches are
/// closed on their upper end; the clamped tail reports zero slope.
pub fn water_content_derivative(h: f64, cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    let phi = medium.porosity;
    let hr = reference_head(cell, medium);
    if h > cell.z_max {
        0.0
    } else if h > hr {
        phi / (cell.z_max - cell.z_min)
    } else if phi * (medium.alpha_phi - medium.alpha_theta * (hr - h)) > 0.0 {
        phi * medium.alpha_theta
    } else {
        0.0
    }
}

/// Water saturation S(h) = θ/φ, in [0, 1].
pub fn saturation(h: f64, cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    water_content(h, cell, medium) / medium.porosity
}

pub fn saturation_derivative(h: f64, cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    water_content_derivative(h, cell, medium) / medium.porosity
}

/// Relative permeability: the saturation, floored at `medium.kr_floor`.
pub fn relative_permeability(h: f64, cell: &CellGeometry, medium: &MediumProperties) -> f64 {
    saturation(h, cell, medium).max(medium.kr_floor)
}

/// dK_r/dh; zero where the floor is active.
pub fn relative_permeability_derivative(
    h: f64,
    cell: &CellGeometry,
    medium: &MediumProperties,
) -> f64 {
    if saturation(h, cell, medium) > medium.kr_floor {
        saturation_derivative(h, cell, medium)
    } else {
        0.0
    }
}

/// Families of functions 𝒦(K_r, q) interpolating between the linear problem
/// (𝒦 ≡ 1 at q = 0) and the full relative permeability (𝒦 ≡ K_r at q = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationFunctionKind {
    /// 𝒦 = K_r^q
    Power,
    /// 𝒦 = 1 + q·(K_r − 1)
    Linear,
}

impl ContinuationFunctionKind {
    pub fn name(self) -> &'static str {
        match self {
            ContinuationFunctionKind::Power => "power",
            ContinuationFunctionKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "power" => Some(ContinuationFunctionKind::Power),
            "linear" => Some(ContinuationFunctionKind::Linear),
            _ => None,
        }
    }
}

/// Continuation-scaled permeability 𝒦(K_r, q).
///
/// The endpoints are exact: q = 0 gives 1 and q = 1 gives K_r for both
/// kinds. Panics if q lies outside [0, 1].
pub fn continuation_permeability(kr: f64, q: f64, kind: ContinuationFunctionKind) -> f64 {
    assert!((0.0..=1.0).contains(&q), "continuation parameter q = {q} outside [0, 1]");
    if q == 0.0 {
        1.0
    } else if q == 1.0 {
        kr
    } else {
        match kind {
            ContinuationFunctionKind::Power => kr.powf(q),
            ContinuationFunctionKind::Linear => 1.0 + q * (kr - 1.0),
        }
    }
}

/// d𝒦/dK_r at fixed q, consistent with [`continuation_permeability`].
pub fn continuation_permeability_dkr(kr: f64, q: f64, kind: ContinuationFunctionKind) -> f64 {
    assert!((0.0..=1.0).contains(&q), "continuation parameter q = {q} outside [0, 1]");
    if q == 0.0 {
        0.0
    } else if q == 1.0 {
        1.0
    } else {
        match kind {
            ContinuationFunctionKind::Power => q * kr.powf(q - 1.0),
            ContinuationFunctionKind::Linear => q,
        }
    }
}
