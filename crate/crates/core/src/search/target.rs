//! Where a passage must enter the local neighbourhood to cross `W^s_j`
//! on a prescribed turn of the spiral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3};
use crate::params::ModelParams;
use crate::real::Real;

/// Each turn of a spiral meets the stable line twice; `First` is the crossing
/// reached with the smaller swept phase (larger entry radius).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairSlot {
    First,
    Second,
}

impl PairSlot {
    pub fn other(self) -> PairSlot {
        match self {
            PairSlot::First => PairSlot::Second,
            PairSlot::Second => PairSlot::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PairSlot::First => 0,
            PairSlot::Second => 1,
        }
    }

    pub fn both() -> [PairSlot; 2] {
        [PairSlot::First, PairSlot::Second]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingTarget<T> {
    /// Swept phase `ωT` of the crossing.
    pub phase: T,
    /// Entry radius and entry angle `β` of the unstable-plane coordinates.
    pub rho: T,
    pub beta: T,
    /// Signed position along `W^s_j` in units of its tangent.
    pub s: T,
}

/// Direction of `W^s_j` in the exit coordinates of branch `j`.
pub fn stable_direction_in_exit_coords<T: Real>(j: usize, mp: &ModelParams) -> Result<[T; 3]> {
    let b = mp.branch(j)?;
    let a: Mat3<T> = linalg::lift_mat(&b.linear_part);
    let inv = linalg::inverse(&a).ok_or_else(|| Error::DomainError("singular transition".into()))?;
    let ts = linalg::lift_vec(b.stable_tangent());
    Ok(linalg::mul_vec(&inv, &ts))
}

/// Entry data for a passage that starts with stable-plane angle `phi_s`
/// and crosses the stable line of branch `j` during turn `n` of the spiral.
///
/// Exact for affine transitions; a first guess otherwise.
pub fn crossing_target<T: Real>(phi_s: T, j: usize, n: i64, slot: PairSlot, mp: &ModelParams) -> Result<CrossingTarget<T>> {
    if n < 0 {
        return Err(Error::InvalidRequest(format!("negative winding {n}")));
    }
    let v = stable_direction_in_exit_coords::<T>(j, mp)?;
    let nu = v[0].hypot(v[1]);
    let kappa = v[1].atan2(v[0]);
    let pi = T::pi();
    let base = {
        let d = kappa - phi_s;
        d - pi * (d / pi).floor()
    };
    let mut phase = T::tau() * T::from_f64(n as f64) + base;
    if slot == PairSlot::Second {
        phase += pi;
    }
    let rho = T::from_f64(mp.section_radius) * (-(phase / T::from_f64(mp.twist()))).exp();
    // θ = φ_s + ωT equals κ (s > 0) or κ + π (s < 0)
    let theta_minus_kappa = (phi_s + phase - kappa).wrap_pi();
    let s = if theta_minus_kappa.abs() < pi / T::from_f64(2.0) { rho / nu } else { -rho / nu };
    let psi = s * v[2];
    let beta = (T::from_f64(mp.branch(j)?.phi_u_anchor) + phase + psi).wrap_tau();
    Ok(CrossingTarget { phase, rho, beta, s })
}
