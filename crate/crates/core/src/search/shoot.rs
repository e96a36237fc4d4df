//! Shooting along itineraries from the Fix-plane, with analytic derivatives.

use crate::error::{Error, Result};
use crate::geometry::{InPoint, SigmaPoint};
use crate::global::{global_map_s, global_map_s_jacobian_on, return_map_with_jacobian, Passage, ReturnResult};
use crate::linalg::{self, Mat3};
use crate::params::ModelParams;
use crate::real::Real;

pub type Vec2<T> = [T; 2];
pub type Mat2<T> = [[T; 2]; 2];

/// Result of following `x = (a, b, 0)` through `steps` landed passages and
/// entering the local neighbourhood once more.
#[derive(Debug, Clone)]
pub struct Shot<T> {
    pub start: SigmaPoint<T>,
    pub passages: Vec<ReturnResult<T>>,
    /// Branch the last point lies in.
    pub last_branch: usize,
    /// Entry point of the next passage, `Π^s(Π^steps(x))`.
    pub entry: InPoint<T>,
    /// `∂(u3, u4)/∂(a, b)` of the entry point.
    pub entry_jacobian: Mat2<T>,
}

impl<T: Real> Shot<T> {
    pub fn last_point(&self) -> SigmaPoint<T> {
        self.passages.last().map_or(self.start, |p| p.point)
    }

    pub fn entry_w(&self) -> Vec2<T> {
        [self.entry.u3, self.entry.u4]
    }

    pub fn symbols(&self) -> Vec<usize> {
        std::iter::once(self.first_branch()).chain(self.passages.iter().map(|p| p.symbol)).collect()
    }

    pub fn first_branch(&self) -> usize {
        self.passages.first().map_or(self.last_branch, |p| p.from)
    }

    pub fn windings(&self) -> Vec<i64> {
        self.passages.iter().map(|p| p.windings).collect()
    }
}

/// Why a shot stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotFailure {
    /// The orbit left through the exit section outside every window, at passage `step` (1-based).
    Escaped { step: usize },
    /// The orbit hit the local stable manifold at passage `step`.
    StableHit { step: usize },
    /// Any other domain violation at passage `step`.
    Domain { step: usize },
}

pub fn shoot<T: Real>(x: Vec2<T>, steps: usize, mp: &ModelParams) -> std::result::Result<Shot<T>, ShotFailure> {
    let start = SigmaPoint::on_fix(x[0], x[1]);
    let mut cur = start;
    let mut jac: Mat3<T> = linalg::identity();
    let mut passages = Vec::with_capacity(steps);
    for k in 1..=steps {
        match return_map_with_jacobian(&cur, mp) {
            Ok((Passage::Landed(r), Some(d))) => {
                jac = linalg::mul(&d, &jac);
                cur = r.point;
                passages.push(r);
            }
            Ok(_) => return Err(ShotFailure::Escaped { step: k }),
            Err(Error::StableManifoldHit { .. }) => return Err(ShotFailure::StableHit { step: k }),
            Err(_) => return Err(ShotFailure::Domain { step: k }),
        }
    }
    let last_branch = crate::global::branch_of(&cur, mp).ok_or(ShotFailure::Domain { step: steps + 1 })?;
    let entry = global_map_s(&cur, mp).map_err(|_| ShotFailure::Domain { step: steps + 1 })?;
    let ds = global_map_s_jacobian_on(&cur, last_branch, mp).map_err(|_| ShotFailure::Domain { step: steps + 1 })?;
    let full = linalg::mul(&ds, &jac);
    let entry_jacobian = [[full[1][0], full[1][1]], [full[2][0], full[2][1]]];
    Ok(Shot { start, passages, last_branch, entry, entry_jacobian })
}

/// Options of the damped Newton solver.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Absolute residual accepted as converged.
    pub tol: f64,
    /// Residual accepted when no further decrease is possible in the working precision.
    pub stall_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 80, tol: 1e-28, stall_tol: 1e-28 }
    }
}

fn norm2<T: Real>(v: Vec2<T>) -> f64 {
    v[0].to_f64().hypot(v[1].to_f64())
}

/// Solves `f(x) = target` for `x ∈ R²` by damped Newton.
///
/// `f` returns the value and Jacobian, or `None` where undefined; steps into
/// undefined regions or steps that do not decrease the residual are halved.
pub fn newton2<T: Real>(
    mut f: impl FnMut(Vec2<T>) -> Option<(Vec2<T>, Mat2<T>)>,
    x0: Vec2<T>,
    target: Vec2<T>,
    opts: NewtonOptions,
) -> Result<Vec2<T>> {
    let (fx, mut jac) = f(x0).ok_or_else(|| Error::RootNotConverged("start point outside the domain".into()))?;
    let mut x = x0;
    let mut res = [fx[0] - target[0], fx[1] - target[1]];
    for _ in 0..opts.max_iter {
        let r = norm2(res);
        if r <= opts.tol {
            return Ok(x);
        }
        let step = match linalg::solve2(jac, res) {
            Some(s) => s,
            None => return Err(Error::RootNotConverged("singular jacobian".into())),
        };
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let xn = [x[0] - lambda * step[0], x[1] - lambda * step[1]];
            if let Some((fn_, jn)) = f(xn) {
                let rn = [fn_[0] - target[0], fn_[1] - target[1]];
                if norm2(rn) < r || norm2(rn) <= opts.tol {
                    x = xn;
                    res = rn;
                    jac = jn;
                    accepted = true;
                    break;
                }
            }
            lambda = lambda * T::from_f64(0.5);
        }
        if !accepted {
            if r <= opts.stall_tol {
                return Ok(x);
            }
            return Err(Error::RootNotConverged(format!("no decrease from residual {r:e}")));
        }
    }
    if norm2(res) <= opts.stall_tol {
        return Ok(x);
    }
    Err(Error::RootNotConverged(format!("residual {:e} after {} iterations", norm2(res), opts.max_iter)))
}
