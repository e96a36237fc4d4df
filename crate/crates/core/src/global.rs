//! Global transitions along the homoclinic branches and the return map on Σ.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{InPoint, OutPoint, SigmaPoint};
use crate::linalg::{self, Mat3, Vec3};
use crate::local::{local_map_jacobian, local_passage};
use crate::params::{BranchParams, ModelParams};
use crate::real::Real;

/// Local coordinates `u = (u1, u2, φ_u - φ_i)` of an exit point around `q_i^u`.
fn exit_coords<T: Real>(p: &OutPoint<T>, b: &BranchParams) -> Vec3<T> {
    [p.u1, p.u2, (p.phi_u - T::from_f64(b.phi_u_anchor)).wrap_pi()]
}

fn transition<T: Real>(u: &Vec3<T>, b: &BranchParams) -> Vec3<T> {
    let a: Mat3<T> = linalg::lift_mat(&b.linear_part);
    let mut y = linalg::add(&linalg::lift_vec(b.q()), &linalg::mul_vec(&a, u));
    if let Some(h) = &b.quadratic {
        for (k, hk) in h.iter().enumerate() {
            let hk: Mat3<T> = linalg::lift_mat(hk);
            y[k] += linalg::dot(u, &linalg::mul_vec(&hk, u));
        }
    }
    y
}

fn transition_jacobian<T: Real>(u: &Vec3<T>, b: &BranchParams) -> Mat3<T> {
    let mut a: Mat3<T> = linalg::lift_mat(&b.linear_part);
    if let Some(h) = &b.quadratic {
        for (k, hk) in h.iter().enumerate() {
            for (l, entry) in a[k].iter_mut().enumerate() {
                for (m, um) in u.iter().enumerate() {
                    *entry += T::from_f64(hk[l][m] + hk[m][l]) * *um;
                }
            }
        }
    }
    a
}

/// Solves `q + A u + Q(u) = y` for `u`.
fn transition_inverse<T: Real>(y: &Vec3<T>, b: &BranchParams) -> Result<Vec3<T>> {
    let a: Mat3<T> = linalg::lift_mat(&b.linear_part);
    let inv = linalg::inverse(&a).ok_or_else(|| Error::DomainError("singular transition".into()))?;
    let rhs = linalg::sub(y, &linalg::lift_vec(b.q()));
    let mut u = linalg::mul_vec(&inv, &rhs);
    if b.quadratic.is_none() {
        return Ok(u);
    }
    for _ in 0..60 {
        let res = linalg::sub(&transition(&u, b), y);
        let j =
            linalg::inverse(&transition_jacobian(&u, b)).ok_or_else(|| Error::RootNotConverged("singular transition jacobian".into()))?;
        let du = linalg::mul_vec(&j, &res);
        u = linalg::sub(&u, &du);
        if linalg::norm(&du).to_f64() <= 4.0 * T::EPSILON * (1.0 + linalg::norm(&u).to_f64()) {
            return Ok(u);
        }
    }
    Err(Error::RootNotConverged("inverse of the quadratic transition".into()))
}

/// Whether an exit point lies in `C_i^out`: inside the angular window around
/// `φ_i` and mapped into `V_i`.
pub fn in_exit_window<T: Real>(p: &OutPoint<T>, i: usize, mp: &ModelParams) -> Result<bool> {
    let b = mp.branch(i)?;
    let u = exit_coords(p, b);
    if u[2].abs().to_f64() > mp.c_radius {
        return Ok(false);
    }
    let y = transition(&u, b);
    Ok(distance_to_q(&y, b).to_f64() <= mp.v_radius)
}

fn distance_to_q<T: Real>(y: &Vec3<T>, b: &BranchParams) -> T {
    linalg::norm(&linalg::sub(y, &linalg::lift_vec(b.q())))
}

/// `Π^u_i : C_i^out → V_i`.
pub fn global_map_u<T: Real>(p: &OutPoint<T>, i: usize, mp: &ModelParams) -> Result<SigmaPoint<T>> {
    if !in_exit_window(p, i, mp)? {
        return Err(Error::DomainError(format!("exit point outside the window of branch {i}")));
    }
    let b = mp.branch(i)?;
    Ok(SigmaPoint::from_coords(transition(&exit_coords(p, b), b)).with_hint(i))
}

/// Branch whose ball `V_i` contains `y`.
pub fn branch_of<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams) -> Option<usize> {
    let v = y.coords();
    let mut best: Option<(usize, f64)> = None;
    for (k, b) in mp.branches.iter().enumerate() {
        let d = distance_to_q(&v, b).to_f64();
        if d <= mp.v_radius && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((k + 1, d));
        }
    }
    best.map(|(i, _)| i)
}

/// `Π^s = R ∘ (Π^u_i)^{-1} ∘ R`, mapping `V_i` into the entrance section.
pub fn global_map_s<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams) -> Result<InPoint<T>> {
    let i = branch_of(y, mp).ok_or_else(|| Error::DomainError("point outside every V_i".into()))?;
    global_map_s_on(y, i, mp)
}

pub(crate) fn global_map_s_on<T: Real>(y: &SigmaPoint<T>, i: usize, mp: &ModelParams) -> Result<InPoint<T>> {
    let b = mp.branch(i)?;
    let w = transition_inverse(&y.reflect().coords(), b)?;
    let out = OutPoint::new(w[0], w[1], (w[2] + T::from_f64(b.phi_u_anchor)).wrap_tau());
    let z = out.reflect();
    if z.r_u().to_f64() > mp.section_radius {
        return Err(Error::DomainError("entry point outside the section disc".into()));
    }
    Ok(z)
}

/// Inverse of `Π^s` on branch `i`: the point of `V_i` entering at `z`.
pub fn global_map_s_inverse<T: Real>(z: &InPoint<T>, i: usize, mp: &ModelParams) -> Result<SigmaPoint<T>> {
    let b = mp.branch(i)?;
    let out = z.reflect();
    let u = exit_coords(&out, b);
    Ok(SigmaPoint::from_coords(transition(&u, b)).reflect().with_hint(i))
}

/// Jacobian of `Π^s` in `(a, b, c) ↦ (φ_s, u3, u4)`.
pub(crate) fn global_map_s_jacobian_on<T: Real>(y: &SigmaPoint<T>, i: usize, mp: &ModelParams) -> Result<Mat3<T>> {
    let b = mp.branch(i)?;
    let w = transition_inverse(&y.reflect().coords(), b)?;
    let inv = linalg::inverse(&transition_jacobian(&w, b)).ok_or_else(|| Error::DomainError("singular transition jacobian".into()))?;
    let flip = |row: [T; 3]| [row[0], row[1], -row[2]];
    Ok([flip(inv[2]), flip(inv[0]), flip(inv[1])])
}

/// One passage from the entry point `z`, forced to land on branch `to`: the
/// landing point on Σ, the Jacobian of `(φ_s, u3, u4) ↦ (a, b, c)` and the swept phase.
///
/// The landing is not checked against the windows, which keeps the map smooth
/// for root finding; callers verify the itinerary afterwards.
pub fn forced_landing<T: Real>(z: &InPoint<T>, to: usize, mp: &ModelParams) -> Result<(SigmaPoint<T>, Mat3<T>, T)> {
    let b = mp.branch(to)?;
    let lp = local_passage(z, mp)?;
    let dl = local_map_jacobian(z, mp)?;
    let u = exit_coords(&lp.out, b);
    let y = SigmaPoint::from_coords(transition(&u, b)).with_hint(to);
    Ok((y, linalg::mul(&transition_jacobian(&u, b), &dl), lp.phase))
}

/// As [`forced_landing`], continued to the next entry point, with the Jacobian
/// of `(φ_s, u3, u4) ↦ (φ_s', u3', u4')`.
pub fn forced_passage<T: Real>(z: &InPoint<T>, to: usize, mp: &ModelParams) -> Result<(InPoint<T>, Mat3<T>, T)> {
    let (y, dy, phase) = forced_landing(z, to, mp)?;
    let next = global_map_s_on(&y, to, mp)?;
    let ds = global_map_s_jacobian_on(&y, to, mp)?;
    Ok((next, linalg::mul(&ds, &dy), phase))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnResult<T = f64> {
    pub point: SigmaPoint<T>,
    /// Branch the passage started from.
    pub from: usize,
    /// Branch of the landing ball.
    pub symbol: usize,
    /// Full turns made around the local unstable manifold, `⌊ωT / 2π⌋`.
    pub windings: i64,
    /// Unwrapped `ω T`.
    pub phase: T,
    pub entry_radius: T,
}

/// The orbit left `V_O` through the exit section but outside every window `C_j^out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapedTube<T = f64> {
    pub from: usize,
    pub out: OutPoint<T>,
    pub phase: T,
    pub entry_radius: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Passage<T = f64> {
    Landed(ReturnResult<T>),
    Escaped(EscapedTube<T>),
}

impl<T: Real> Passage<T> {
    pub fn landed(self) -> Option<ReturnResult<T>> {
        match self {
            Passage::Landed(r) => Some(r),
            Passage::Escaped(_) => None,
        }
    }
}

fn land<T: Real>(out: &OutPoint<T>, mp: &ModelParams) -> Option<(usize, Vec3<T>, Vec3<T>)> {
    for (k, b) in mp.branches.iter().enumerate() {
        let u = exit_coords(out, b);
        if u[2].abs().to_f64() > mp.c_radius {
            continue;
        }
        let y = transition(&u, b);
        if distance_to_q(&y, b).to_f64() <= mp.v_radius {
            return Some((k + 1, u, y));
        }
    }
    None
}

fn return_map_inner<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams, want_jac: bool) -> Result<(Passage<T>, Option<Mat3<T>>)> {
    let from = branch_of(y, mp).ok_or_else(|| Error::DomainError("point outside every V_i".into()))?;
    let z = global_map_s_on(y, from, mp)?;
    let lp = local_passage(&z, mp)?;
    let windings = (lp.phase / T::tau()).floor().to_f64() as i64;
    match land(&lp.out, mp) {
        None => Ok((Passage::Escaped(EscapedTube { from, out: lp.out, phase: lp.phase, entry_radius: lp.entry_radius }), None)),
        Some((symbol, u, img)) => {
            let jac = if want_jac {
                let ds = global_map_s_jacobian_on(y, from, mp)?;
                let dl = local_map_jacobian(&z, mp)?;
                let du = transition_jacobian(&u, mp.branch(symbol)?);
                Some(linalg::mul(&du, &linalg::mul(&dl, &ds)))
            } else {
                None
            };
            let res = ReturnResult {
                point: SigmaPoint::from_coords(img).with_hint(symbol),
                from,
                symbol,
                windings,
                phase: lp.phase,
                entry_radius: lp.entry_radius,
            };
            Ok((Passage::Landed(res), jac))
        }
    }
}

/// `Π = Π^u ∘ Π_O ∘ Π^s` on `V = ∪ V_i`.
pub fn return_map<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams) -> Result<Passage<T>> {
    return_map_inner(y, mp, false).map(|(p, _)| p)
}

/// The return map and, when the orbit lands, its Jacobian in `(a, b, c)`.
pub fn return_map_with_jacobian<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams) -> Result<(Passage<T>, Option<Mat3<T>>)> {
    return_map_inner(y, mp, true)
}

/// `Π^{-1} = R ∘ Π ∘ R`.
pub fn return_map_inverse<T: Real>(y: &SigmaPoint<T>, mp: &ModelParams) -> Result<Passage<T>> {
    match return_map(&y.reflect(), mp) {
        Ok(Passage::Landed(mut r)) => {
            r.point = r.point.reflect();
            Ok(Passage::Landed(r))
        }
        Ok(Passage::Escaped(e)) => Ok(Passage::Escaped(EscapedTube { out: e.out, ..e })),
        Err(Error::StableManifoldHit { radius }) => Err(Error::UnstableManifoldHit { radius }),
        Err(e) => Err(e),
    }
}

/// Point of the unstable trace `W^u_i = Π^u_i({u1 = u2 = 0})` at exit angle offset `ψ`,
/// and its tangent.
pub fn unstable_curve<T: Real>(i: usize, psi: T, mp: &ModelParams) -> Result<(Vec3<T>, Vec3<T>)> {
    let b = mp.branch(i)?;
    let u = [T::zero(), T::zero(), psi];
    Ok((transition(&u, b), linalg::column(&transition_jacobian(&u, b), 2)))
}

/// Distance from `y` to the unstable trace of branch `i` and the parameter of the foot point.
pub fn closest_on_unstable<T: Real>(y: &SigmaPoint<T>, i: usize, mp: &ModelParams) -> Result<(T, T)> {
    let b = mp.branch(i)?;
    let v = y.coords();
    let (q0, t0) = unstable_curve(i, T::zero(), mp)?;
    let mut psi = linalg::dot(&linalg::sub(&v, &q0), &t0) / linalg::dot(&t0, &t0);
    if b.quadratic.is_some() {
        for _ in 0..50 {
            let (p, t) = unstable_curve(i, psi, mp)?;
            let d = linalg::sub(&v, &p);
            let step = linalg::dot(&d, &t) / linalg::dot(&t, &t);
            psi += step;
            if step.abs().to_f64() <= 4.0 * T::EPSILON * (1.0 + psi.abs().to_f64()) {
                break;
            }
        }
    }
    let (p, _) = unstable_curve(i, psi, mp)?;
    Ok((linalg::norm(&linalg::sub(&v, &p)), psi))
}

pub fn distance_to_unstable<T: Real>(y: &SigmaPoint<T>, i: usize, mp: &ModelParams) -> Result<T> {
    closest_on_unstable(y, i, mp).map(|(d, _)| d)
}

/// The stable trace is the mirror image of the unstable one.
pub fn distance_to_stable<T: Real>(y: &SigmaPoint<T>, i: usize, mp: &ModelParams) -> Result<T> {
    distance_to_unstable(&y.reflect(), i, mp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitStop {
    Completed,
    StableManifoldHit,
    UnstableManifoldHit,
    Escaped,
    LeftDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitStep<T = f64> {
    pub step: i64,
    pub point: SigmaPoint<T>,
    pub symbol: usize,
    /// Windings of the passage that produced this point (forward steps) or left it (backward steps).
    pub windings: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace<T = f64> {
    /// Ordered by step, from the most negative to the most positive.
    pub steps: Vec<OrbitStep<T>>,
    pub forward_stop: OrbitStop,
    pub backward_stop: OrbitStop,
}

pub(crate) fn stop_of(e: &Error) -> OrbitStop {
    match e {
        Error::StableManifoldHit { .. } => OrbitStop::StableManifoldHit,
        Error::UnstableManifoldHit { .. } => OrbitStop::UnstableManifoldHit,
        _ => OrbitStop::LeftDomain,
    }
}

/// Iterates `Π` forward and `Π^{-1}` backward from `y`, stopping each direction
/// at the first passage that does not land.
pub fn trace_orbit<T: Real>(y: &SigmaPoint<T>, forward: usize, backward: usize, mp: &ModelParams) -> Result<OrbitTrace<T>> {
    let symbol = branch_of(y, mp).ok_or_else(|| Error::DomainError("start point outside every V_i".into()))?;
    let mut fwd = Vec::new();
    let mut forward_stop = OrbitStop::Completed;
    let mut cur = *y;
    for k in 1..=forward {
        match return_map(&cur, mp) {
            Ok(Passage::Landed(r)) => {
                fwd.push(OrbitStep { step: k as i64, point: r.point, symbol: r.symbol, windings: Some(r.windings) });
                cur = r.point;
            }
            Ok(Passage::Escaped(_)) => {
                forward_stop = OrbitStop::Escaped;
                break;
            }
            Err(e) => {
                forward_stop = stop_of(&e);
                break;
            }
        }
    }
    let mut bwd = Vec::new();
    let mut backward_stop = OrbitStop::Completed;
    let mut cur = *y;
    for k in 1..=backward {
        match return_map_inverse(&cur, mp) {
            Ok(Passage::Landed(r)) => {
                bwd.push(OrbitStep { step: -(k as i64), point: r.point, symbol: r.symbol, windings: Some(r.windings) });
                cur = r.point;
            }
            Ok(Passage::Escaped(_)) => {
                backward_stop = OrbitStop::Escaped;
                break;
            }
            Err(e) => {
                backward_stop = stop_of(&e);
                break;
            }
        }
    }
    bwd.reverse();
    let mut steps = bwd;
    steps.push(OrbitStep { step: 0, point: *y, symbol, windings: None });
    steps.extend(fwd);
    Ok(OrbitTrace { steps, forward_stop, backward_stop })
}

impl<T: Real> OrbitTrace<T> {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "a", "b", "c", "symbol", "windings"])?;
        for s in &self.steps {
            let p = s.point.to_f64();
            let wind = s.windings.map(|n| n.to_string()).unwrap_or_default();
            wr.write_record([
                s.step.to_string(),
                format!("{:e}", p.a),
                format!("{:e}", p.b),
                format!("{:e}", p.c),
                s.symbol.to_string(),
                wind,
            ])?;
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

    /// A point of `V_i` whose passage has entry radius `rho` and exits at `φ_j + dpsi`.
    fn landing_point<T: Real>(i: usize, j: usize, rho: f64, dpsi: f64, m: &ModelParams) -> SigmaPoint<T> {
        let phase = m.omega / m.alpha * (m.section_radius / rho).ln();
        let beta = m.branch(j).unwrap().phi_u_anchor + phase + dpsi;
        let phi_s = m.branch(i).unwrap().phi_u_anchor + 0.003;
        let z = InPoint::new(T::from_f64(phi_s), T::from_f64(rho * beta.cos()), T::from_f64(rho * beta.sin()));
        global_map_s_inverse(&z, i, m).unwrap()
    }

    #[test]
    fn q_maps_to_stable_manifold_hit() {
        let m = mp();
        let q = SigmaPoint::on_fix(0.5, 0.0);
        assert!(matches!(return_map(&q, &m), Err(Error::StableManifoldHit { .. })));
        assert!(matches!(return_map_inverse(&q, &m), Err(Error::UnstableManifoldHit { .. })));
    }

    #[test]
    fn stable_entry_circle_maps_from_w_s() {
        let m = mp();
        let b = m.branch(1).unwrap();
        let ts = b.stable_tangent();
        let y = SigmaPoint::new(0.5 + 0.01 * ts[0], 0.01 * ts[1], 0.01 * ts[2]);
        let z = global_map_s(&y, &m).unwrap();
        assert!(z.r_u() < 1e-16);
        assert!(distance_to_stable(&y, 1, &m).unwrap() < 1e-16);
    }

    #[test]
    fn inverse_undoes_forward() {
        let m = mp();
        let y: SigmaPoint = landing_point(1, 2, 0.08, 0.004, &m);
        let fwd = return_map(&y, &m).unwrap().landed().expect("lands");
        let back = return_map_inverse(&fwd.point, &m).unwrap().landed().unwrap();
        assert!(back.point.distance(&y) < 1e-12);
        assert_eq!(back.symbol, 1);
        assert_eq!(back.windings, fwd.windings);
    }

    #[test]
    fn return_jacobian_matches_difference_quotients() {
        let m = mp();
        let y: SigmaPoint<Dd> = landing_point(1, 1, 0.05, -0.003, &m);
        let (p, jac) = return_map_with_jacobian(&y, &m).unwrap();
        let base = p.landed().expect("lands");
        let jac = jac.unwrap();
        let h = Dd::from_f64(1e-14);
        for col in 0..3 {
            let mut c = y.coords();
            c[col] += h;
            let yp = return_map(&SigmaPoint::from_coords(c), &m).unwrap().landed().unwrap();
            c[col] -= h + h;
            let ym = return_map(&SigmaPoint::from_coords(c), &m).unwrap().landed().unwrap();
            let (fp, fm) = (yp.point.coords(), ym.point.coords());
            for row in 0..3 {
                let fd = ((fp[row] - fm[row]) / (h + h)).to_f64();
                let an = jac[row][col].to_f64();
                assert!((fd - an).abs() < 1e-9 * (1.0 + an.abs()), "{row},{col}: {fd} vs {an}");
            }
        }
        assert_eq!(base.symbol, branch_of(&base.point, &m).unwrap());
    }

    #[test]
    fn quadratic_transition_inverts() {
        let mut m = mp();
        let mut h = [[[0.0; 3]; 3]; 3];
        h[0][2][2] = 0.2;
        h[2][0][1] = -0.1;
        m.branches[0].quadratic = Some(h);
        let out = OutPoint::new(0.002, -0.001, 0.01);
        let y = global_map_u(&out, 1, &m).unwrap();
        let z = global_map_s(&y.reflect(), &m).unwrap();
        assert!((z.u3 - out.u1).abs() < 1e-15 && (z.u4 - out.u2).abs() < 1e-15);
        assert!((z.phi_s - out.phi_u).abs() < 1e-14);
    }

    #[test]
    fn escape_is_reported_as_data() {
        let m = mp();
        // entry far from the stable manifold: phase lands between windows
        let mut found = false;
        for k in 0..200 {
            let y = SigmaPoint::new(0.5 + 0.03 * (k as f64 * 0.1).cos(), 0.03 * (k as f64 * 0.1).sin(), 0.01);
            if let Ok(Passage::Escaped(_)) = return_map(&y, &m) {
                found = true;
            }
        }
        assert!(found);
    }
}
