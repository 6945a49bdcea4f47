use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Point in cylindrical coordinates: angle (rad), radius and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylindrical {
    pub theta: f64,
    pub rho: f64,
    pub z: f64,
}

impl Cylindrical {
    pub const fn new(theta: f64, rho: f64, z: f64) -> Self {
        Self { theta, rho, z }
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        [self.rho * self.theta.cos(), self.rho * self.theta.sin(), self.z]
    }
}

/// Heart location with its static orientation angles `(ψx, ψy, ψz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartPlacement {
    pub position: Cylindrical,
    #[serde(default)]
    pub orientation: [f64; 3],
}

/// Cylindrical volume conductor with electrodes, reference electrode and hearts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleScene {
    pub electrodes: Vec<Cylindrical>,
    pub reference: Cylindrical,
    pub mheart: HeartPlacement,
    /// One placement per fetus.
    pub fhearts: Vec<HeartPlacement>,
    pub radius: f64,
    /// Total height; the cylinder spans `z ∈ [−height/2, height/2]`.
    pub height: f64,
}

impl Default for DipoleScene {
    /// Eight-electrode layout with the maternal heart high in the cylinder and
    /// the fetal heart low, reference electrode on the back.
    fn default() -> Self {
        let electrodes = vec![
            Cylindrical::new(0.0, 0.5, -0.30),
            Cylindrical::new(-PI / 10.0, 0.5, -0.30),
            Cylindrical::new(-PI / 4.0, 0.5, -0.30),
            Cylindrical::new(-PI / 10.0, 0.5, -0.45),
            Cylindrical::new(-PI / 10.0, 0.5, -0.15),
            Cylindrical::new(2.0 * PI / 3.0, 0.5, 0.40),
            Cylindrical::new(PI / 2.0, 0.5, -0.20),
            Cylindrical::new(3.0 * PI / 2.0, 0.5, 0.20),
        ];
        Self {
            electrodes,
            reference: Cylindrical::new(PI, 0.5, -0.3),
            mheart: HeartPlacement { position: Cylindrical::new(2.0 * PI / 3.0, 0.4, 0.4), orientation: [0.0; 3] },
            fhearts: vec![HeartPlacement {
                position: Cylindrical::new(-PI / 10.0, 0.4, -0.3),
                orientation: [0.0, PI, 0.0],
            }],
            radius: 0.5,
            height: 1.0,
        }
    }
}

const SURFACE_TOL: f64 = 1e-9;

impl DipoleScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.height > 0.0) {
            return Err(Error::invalid("cylinder radius and height must be positive"));
        }
        if self.electrodes.is_empty() {
            return Err(Error::invalid("scene needs at least one electrode"));
        }
        for e in self.electrodes.iter().chain(std::iter::once(&self.reference)) {
            if (e.rho - self.radius).abs() > SURFACE_TOL || e.z.abs() > self.height / 2.0 + SURFACE_TOL {
                return Err(Error::invalid("electrodes must lie on the cylinder surface"));
            }
        }
        for h in std::iter::once(&self.mheart).chain(&self.fhearts) {
            if !self.contains(h.position.to_cartesian()) {
                return Err(Error::invalid("hearts must lie strictly inside the cylinder"));
            }
        }
        Ok(())
    }

    /// True when `p` is strictly inside the cylinder.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[0].hypot(p[1]) < self.radius && p[2].abs() < self.height / 2.0
    }

    pub fn electrode_positions(&self) -> Vec<[f64; 3]> {
        self.electrodes.iter().map(Cylindrical::to_cartesian).collect()
    }

    /// Copy keeping only the listed electrodes (0-based).
    pub fn select_electrodes(&self, idx: &[usize]) -> Result<Self> {
        let mut s = self.clone();
        s.electrodes = idx
            .iter()
            .map(|&i| self.electrodes.get(i).copied().ok_or_else(|| Error::invalid("electrode index out of range")))
            .collect::<Result<_>>()?;
        Ok(s)
    }
}

/// Potential gains `r / (4π|r|³)` of a unit dipole at `source` seen at `point`.
pub fn dipole_gain(source: [f64; 3], point: [f64; 3]) -> Result<[f64; 3]> {
    let r = [point[0] - source[0], point[1] - source[1], point[2] - source[2]];
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(norm > 0.0) {
        return Err(Error::invalid("dipole coincides with the observation point"));
    }
    let s = 1.0 / (4.0 * PI * norm * norm * norm);
    Ok([r[0] * s, r[1] * s, r[2] * s])
}

/// Gains of the x, y, z dipole components at an electrode, relative to the reference electrode.
pub fn projection_row(source: [f64; 3], electrode: [f64; 3], reference: [f64; 3]) -> Result<[f64; 3]> {
    let e = dipole_gain(source, electrode)?;
    let r = dipole_gain(source, reference)?;
    Ok([e[0] - r[0], e[1] - r[1], e[2] - r[2]])
}

/// `Rx(ψx)·Ry(ψy)·Rz(ψz)` with the sign layout used by the dipole model.
pub fn rotation_matrix(psi_x: f64, psi_y: f64, psi_z: f64) -> Matrix3<f64> {
    let (sx, cx) = psi_x.sin_cos();
    let (sy, cy) = psi_y.sin_cos();
    let (sz, cz) = psi_z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, sx, 0.0, -sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, sz, 0.0, -sz, cz, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}
