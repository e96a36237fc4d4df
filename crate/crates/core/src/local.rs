//! Passage through the linearization neighbourhood `V_O`, from `Σ^in = {r_s = r}`
//! to `Σ^out = {r_u = r}`, using the explicit solutions of the linear bifocus.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{InPoint, OutPoint, Point4};
use crate::linalg::Mat3;
use crate::params::ModelParams;
use crate::real::Real;

/// Entry radii below this fraction of the section radius count as a hit of `W^s_loc`.
pub const STABLE_HIT_FRACTION: f64 = 1e-12;

/// Time to go from `r_u = r_u_in` to `r_u = r`.
pub fn flight_time<T: Real>(r_u_in: T, mp: &ModelParams) -> Result<T> {
    let r = T::from_f64(mp.section_radius);
    if !(r_u_in > T::zero()) || r_u_in > r {
        return Err(Error::DomainError(format!("entry radius {r_u_in} outside (0, r]")));
    }
    Ok((r.ln() - r_u_in.ln()) / T::from_f64(mp.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPassage<T> {
    pub out: OutPoint<T>,
    pub flight_time: T,
    /// Unwrapped angle `ω T` swept by both rotations during the passage.
    pub phase: T,
    pub entry_radius: T,
}

/// `Π_O`, together with the flight time and the swept phase.
pub fn local_passage<T: Real>(p: &InPoint<T>, mp: &ModelParams) -> Result<LocalPassage<T>> {
    let rho = p.r_u();
    let r = T::from_f64(mp.section_radius);
    if rho.to_f64() <= STABLE_HIT_FRACTION * mp.section_radius {
        return Err(Error::StableManifoldHit { radius: rho.to_f64() });
    }
    if rho > r {
        return Err(Error::DomainError(format!("entry radius {rho} exceeds section radius")));
    }
    let t = flight_time(rho, mp)?;
    let phase = T::from_f64(mp.omega) * t;
    let (s, c) = (p.phi_s + phase).sin_cos();
    Ok(LocalPassage { out: OutPoint::new(rho * c, rho * s, (p.phi_u() - phase).wrap_tau()), flight_time: t, phase, entry_radius: rho })
}

pub fn local_map<T: Real>(p: &InPoint<T>, mp: &ModelParams) -> Result<OutPoint<T>> {
    local_passage(p, mp).map(|lp| lp.out)
}

/// `Π_O^{-1}`, integrating the explicit solutions backwards.
pub fn local_map_inverse<T: Real>(p: &OutPoint<T>, mp: &ModelParams) -> Result<InPoint<T>> {
    let rho = p.r_s();
    let r = T::from_f64(mp.section_radius);
    if rho.to_f64() <= STABLE_HIT_FRACTION * mp.section_radius {
        return Err(Error::UnstableManifoldHit { radius: rho.to_f64() });
    }
    if rho > r {
        return Err(Error::DomainError(format!("exit radius {rho} exceeds section radius")));
    }
    let phase = T::from_f64(mp.omega) * flight_time(rho, mp)?;
    let (s, c) = (p.phi_u + phase).sin_cos();
    Ok(InPoint::new((p.phi_s() - phase).wrap_tau(), rho * c, rho * s))
}

/// Jacobian of `Π_O` in the coordinates `(φ_s, u3, u4) ↦ (u1, u2, φ_u)`.
pub fn local_map_jacobian<T: Real>(p: &InPoint<T>, mp: &ModelParams) -> Result<Mat3<T>> {
    let lp = local_passage(p, mp)?;
    let rho = lp.entry_radius;
    let k = T::from_f64(mp.omega / mp.alpha);
    let (u1, u2) = (lp.out.u1, lp.out.u2);
    // derivatives of (u1, u2, φ_u) in (ρ, β), β = arg(u3 + i u4)
    let du1_drho = u1 / rho + k * u2 / rho;
    let du2_drho = u2 / rho - k * u1 / rho;
    let dphi_drho = k / rho;
    let rho2 = rho * rho;
    let (drho_du3, drho_du4) = (p.u3 / rho, p.u4 / rho);
    let (dbeta_du3, dbeta_du4) = (-p.u4 / rho2, p.u3 / rho2);
    let z = T::zero();
    Ok([
        [-u2, du1_drho * drho_du3, du1_drho * drho_du4],
        [u1, du2_drho * drho_du3, du2_drho * drho_du4],
        [z, dphi_drho * drho_du3 + dbeta_du3, dphi_drho * drho_du4 + dbeta_du4],
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub point: Point4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory4 {
    pub samples: Vec<TrajectorySample>,
}

/// Samples the local orbit from `Σ^in` to `Σ^out` at evenly spaced times.
///
/// A zero flight time (entry already on `Σ^out`) yields a single sample.
pub fn trajectory_through_vo(p: &InPoint, n_samples: usize, mp: &ModelParams) -> Result<Trajectory4> {
    if n_samples < 2 {
        return Err(Error::InvalidRequest("at least two samples are needed".into()));
    }
    let lp = local_passage(p, mp)?;
    let t_end = lp.flight_time;
    let count = if t_end == 0.0 { 1 } else { n_samples };
    let r = mp.section_radius;
    let (rho, beta) = (p.r_u(), p.phi_u());
    let samples = (0..count)
        .map(|k| {
            let t = if count == 1 { 0.0 } else { t_end * k as f64 / (count - 1) as f64 };
            let rs = r * (-mp.alpha * t).exp();
            let ru = rho * (mp.alpha * t).exp();
            let (ss, cs) = (p.phi_s + mp.omega * t).sin_cos();
            let (su, cu) = (beta - mp.omega * t).sin_cos();
            TrajectorySample { t, point: Point4::new(rs * cs, rs * ss, ru * cu, ru * su) }
        })
        .collect();
    Ok(Trajectory4 { samples })
}

impl Trajectory4 {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x1", "x2", "x3", "x4"])?;
        for s in &self.samples {
            let p = s.point;
            wr.serialize((s.t, p.x1, p.x2, p.x3, p.x4))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Dd;

    fn mp() -> ModelParams {
        ModelParams::default_for(2)
    }

    #[test]
    fn flight_time_closed_form() {
        let t = flight_time(0.1, &mp()).unwrap();
        assert!((t - 10f64.ln()).abs() < 1e-15);
        assert_eq!(flight_time(1.0, &mp()).unwrap(), 0.0);
        assert!(flight_time(0.0, &mp()).is_err());
    }

    #[test]
    fn inverse_is_conjugate_by_involution() {
        let m = mp();
        let p = InPoint::new(0.3, 0.02, -0.05);
        let out = local_map(&p, &m).unwrap();
        let back = local_map_inverse(&out, &m).unwrap();
        let via_r = local_map(&out.reflect(), &m).unwrap().reflect();
        for q in [back, via_r] {
            assert!((q.u3 - p.u3).abs() < 1e-15 && (q.u4 - p.u4).abs() < 1e-15);
            assert!(crate::geometry::circular_distance(q.phi_s, p.phi_s) < 1e-14);
        }
    }

    #[test]
    fn exit_radius_equals_entry_radius() {
        let p = InPoint::new(1.0, 0.003, 0.004);
        let out = local_map(&p, &mp()).unwrap();
        assert!((out.r_s() - 0.005).abs() < 1e-17);
    }

    #[test]
    fn stable_manifold_hit_reported() {
        let p = InPoint::new(1.0, 0.0, 0.0);
        assert!(matches!(local_map(&p, &mp()), Err(Error::StableManifoldHit { .. })));
    }

    #[test]
    fn jacobian_matches_difference_quotients() {
        let m = mp();
        let p = InPoint::new(Dd::from_f64(0.4), Dd::from_f64(0.02), Dd::from_f64(-0.013));
        let jac = local_map_jacobian(&p, &m).unwrap();
        let h = Dd::from_f64(1e-12);
        let f = |q: &InPoint<Dd>| {
            let o = local_map(q, &m).unwrap();
            [o.u1, o.u2, o.phi_u]
        };
        for col in 0..3 {
            let mut plus = p;
            let mut minus = p;
            match col {
                0 => {
                    plus.phi_s += h;
                    minus.phi_s -= h;
                }
                1 => {
                    plus.u3 += h;
                    minus.u3 -= h;
                }
                _ => {
                    plus.u4 += h;
                    minus.u4 -= h;
                }
            }
            let (fp, fm) = (f(&plus), f(&minus));
            for row in 0..3 {
                let diff = if row == 2 { (fp[row] - fm[row]).wrap_pi() } else { fp[row] - fm[row] };
                let fd = (diff / (h + h)).to_f64();
                assert!((fd - jac[row][col].to_f64()).abs() < 1e-8 * (1.0 + fd.abs()), "{row},{col}");
            }
        }
    }

    #[test]
    fn trajectory_endpoints_on_sections() {
        let m = mp();
        let p = InPoint::new(0.2, 0.1, 0.05);
        let tr = trajectory_through_vo(&p, 50, &m).unwrap();
        let first = tr.samples.first().unwrap().point;
        let last = tr.samples.last().unwrap().point;
        assert!((first.x1.hypot(first.x2) - 1.0).abs() < 1e-14);
        assert!((last.x3.hypot(last.x4) - 1.0).abs() < 1e-13);
        let out = local_map(&p, &m).unwrap().to_point4(1.0);
        assert!(last.distance(&out) < 1e-13);
    }
}
