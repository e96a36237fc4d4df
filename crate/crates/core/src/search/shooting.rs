//! Multiple shooting along a prescribed itinerary.
//!
//! Single shooting from the Fix-plane fails for deep itineraries: every
//! passage twists its entry disc into a tight spiral, so the composite map
//! is badly conditioned and strongly curved. Here the entry state of every
//! passage is an unknown of its own, in log-polar form `(φ_s, ln ρ, β)`, and
//! the passages are linked by matching conditions. Each condition involves
//! one passage only, so Newton's method sees a single twist at a time.

use crate::error::{Error, Result};
use crate::geometry::{InPoint, SigmaPoint};
use crate::global::{forced_landing, forced_passage, global_map_s_jacobian_on, global_map_s_on};
use crate::params::ModelParams;
use crate::real::Real;

use super::shoot::Vec2;

/// Entry state of a passage: stable angle, log of the entry radius, entry angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryState<T> {
    pub phi_s: T,
    pub ell: T,
    pub beta: T,
}

impl<T: Real> EntryState<T> {
    pub fn from_entry(z: &InPoint<T>) -> Self {
        EntryState { phi_s: z.phi_s, ell: z.r_u().ln(), beta: z.u4.atan2(z.u3) }
    }

    pub fn from_polar(phi_s: T, rho: T, beta: T) -> Self {
        EntryState { phi_s, ell: rho.ln(), beta }
    }

    pub fn to_entry(&self) -> InPoint<T> {
        let rho = self.ell.exp();
        let (s, c) = self.beta.sin_cos();
        InPoint::new(self.phi_s, rho * c, rho * s)
    }

    pub fn rho(&self) -> T {
        self.ell.exp()
    }
}

/// What the last unknown state must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure<T> {
    /// The entry of the last passage has prescribed radius and angle.
    Entry { rho: T, beta: T },
    /// After the last passage the orbit lands on branch `next` and enters with
    /// unstable-plane coordinates `target` (zero means on the stable manifold).
    Hit { next: usize, target: Vec2<T> },
    /// The last passage enters with radius `rho` and lands on branch `next`
    /// in the Fix-plane.
    Fix { next: usize, rho: T },
}

#[derive(Debug, Clone)]
pub struct ShootingSolution<T> {
    pub x: Vec2<T>,
    pub states: Vec<EntryState<T>>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Residual accepted when the iteration stalls at the precision floor.
    pub stall_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { max_iter: 60, tol: 1e-28, stall_tol: 1e-22 }
    }
}

struct Problem<'a, T> {
    symbols: &'a [usize],
    closure: Closure<T>,
    mp: &'a ModelParams,
}

/// Unknowns: `x` (2), then `(φ_s, ℓ, β)` of each state. For the last state,
/// `ℓ` and `β` are fixed by an `Entry` closure and `ℓ` by a `Fix` closure.
impl<'a, T: Real> Problem<'a, T> {
    fn n_states(&self) -> usize {
        self.symbols.len()
    }

    /// Which of `(φ_s, ℓ, β)` are unknowns for state `k`.
    fn free(&self, k: usize) -> [bool; 3] {
        if k + 1 < self.n_states() {
            return [true; 3];
        }
        match self.closure {
            Closure::Entry { .. } => [true, false, false],
            Closure::Hit { .. } => [true; 3],
            Closure::Fix { .. } => [true, false, true],
        }
    }

    /// Column of component `c` of state `k`, if it is an unknown.
    fn column(&self, k: usize, c: usize) -> Option<usize> {
        if !self.free(k)[c] {
            return None;
        }
        Some(2 + 3 * k + self.free(k)[..c].iter().filter(|f| **f).count())
    }

    fn n_unknowns(&self) -> usize {
        let m = self.n_states();
        2 + 3 * (m - 1) + self.free(m - 1).iter().filter(|f| **f).count()
    }

    fn pack(&self, x: Vec2<T>, states: &[EntryState<T>]) -> Vec<T> {
        let mut z = vec![x[0], x[1]];
        for (k, s) in states.iter().enumerate() {
            for (c, v) in [s.phi_s, s.ell, s.beta].into_iter().enumerate() {
                if self.free(k)[c] {
                    z.push(v);
                }
            }
        }
        z
    }

    fn unpack(&self, z: &[T]) -> (Vec2<T>, Vec<EntryState<T>>) {
        let m = self.n_states();
        let fixed = match self.closure {
            Closure::Entry { rho, beta } => [T::zero(), rho.ln(), beta],
            Closure::Fix { rho, .. } => [T::zero(), rho.ln(), T::zero()],
            Closure::Hit { .. } => [T::zero(); 3],
        };
        let states = (0..m)
            .map(|k| {
                let v = [0, 1, 2].map(|c| self.column(k, c).map_or(fixed[c], |i| z[i]));
                EntryState { phi_s: v[0], ell: v[1], beta: v[2] }
            })
            .collect();
        ([z[0], z[1]], states)
    }

    /// Adds `∂/∂(φ, ℓ, β)` of state `k` given `d` = derivative of some rows in `(φ_s, u3, u4)`.
    fn chain_polar(&self, jac: &mut [Vec<T>], rows: &[(usize, [T; 3])], k: usize, entry: &InPoint<T>) {
        let (u3, u4) = (entry.u3, entry.u4);
        let cols = [[T::one(), T::zero(), T::zero()], [T::zero(), u3, u4], [T::zero(), -u4, u3]];
        for (c, col) in cols.iter().enumerate() {
            if let Some(j) = self.column(k, c) {
                for (r, d) in rows {
                    jac[*r][j] += d[0] * col[0] + d[1] * col[1] + d[2] * col[2];
                }
            }
        }
    }

    /// Residual vector and dense Jacobian.
    fn evaluate(&self, z: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        let n = self.n_unknowns();
        let (x, states) = self.unpack(z);
        let mut res = Vec::with_capacity(n);
        let mut jac = vec![vec![T::zero(); n]; n];
        let m = states.len();

        for k in 0..m {
            let s = &states[k];
            let e = (-s.ell).exp();
            let row = res.len();
            // image of the previous unknowns, and its derivative rows (φ_s, u3, u4)
            let img = if k == 0 {
                let y = SigmaPoint::on_fix(x[0], x[1]);
                let z1 = global_map_s_on(&y, self.symbols[0], self.mp)?;
                let ds = global_map_s_jacobian_on(&y, self.symbols[0], self.mp)?;
                for c in 0..2 {
                    jac[row][c] += ds[0][c];
                    jac[row + 1][c] += ds[1][c] * e;
                    jac[row + 2][c] += ds[2][c] * e;
                }
                z1
            } else {
                let entry = states[k - 1].to_entry();
                let (next, d, _) = forced_passage(&entry, self.symbols[k], self.mp)?;
                let rows = [(row, d[0]), (row + 1, d[1].map(|v| v * e)), (row + 2, d[2].map(|v| v * e))];
                self.chain_polar(&mut jac, &rows, k - 1, &entry);
                next
            };
            let (sb, cb) = s.beta.sin_cos();
            res.push((img.phi_s - s.phi_s).wrap_pi());
            res.push(img.u3 * e - cb);
            res.push(img.u4 * e - sb);
            let own = [
                [(row, -T::one()), (row + 1, T::zero()), (row + 2, T::zero())],
                [(row, T::zero()), (row + 1, -img.u3 * e), (row + 2, -img.u4 * e)],
                [(row, T::zero()), (row + 1, sb), (row + 2, -cb)],
            ];
            for (c, entries) in own.iter().enumerate() {
                if let Some(j) = self.column(k, c) {
                    for (r, v) in entries {
                        jac[*r][j] += *v;
                    }
                }
            }
        }
        let last = states[m - 1].to_entry();
        let row = res.len();
        match self.closure {
            Closure::Entry { .. } => {}
            Closure::Hit { next, target } => {
                let (img, d, _) = forced_passage(&last, next, self.mp)?;
                res.push(img.u3 - target[0]);
                res.push(img.u4 - target[1]);
                self.chain_polar(&mut jac, &[(row, d[1]), (row + 1, d[2])], m - 1, &last);
            }
            Closure::Fix { next, .. } => {
                let (y, d, _) = forced_landing(&last, next, self.mp)?;
                res.push(y.c);
                self.chain_polar(&mut jac, &[(row, d[2])], m - 1, &last);
            }
        }
        debug_assert_eq!(res.len(), n);
        Ok((res, jac))
    }
}

fn norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64().powi(2)).sum::<f64>().sqrt()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[piv][col] == T::zero() || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in (r + 1)..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// `∂x/∂(ℓ, β)` for the solution of an `Entry` closure, by implicit
/// differentiation of the shooting system; `states` are the solved states.
///
/// This stays accurate when the composite map from `x` to the last entry is
/// too expanding for its own Jacobian to be formed in the working precision.
pub fn entry_sensitivity<T: Real>(symbols: &[usize], x: Vec2<T>, states: &[EntryState<T>], mp: &ModelParams) -> Result<[[T; 2]; 2]> {
    let m = states.len();
    if m == 0 || symbols.len() != m {
        return Err(Error::InvalidRequest("itinerary and states do not match".into()));
    }
    let last = states[m - 1];
    let closure = Closure::Entry { rho: last.rho(), beta: last.beta };
    let problem = Problem { symbols, closure, mp };
    let (_, jac) = problem.evaluate(&problem.pack(x, states))?;
    let img = if m == 1 {
        global_map_s_on(&SigmaPoint::on_fix(x[0], x[1]), symbols[0], mp)?
    } else {
        forced_passage(&states[m - 2].to_entry(), symbols[m - 1], mp)?.0
    };
    let e = (-last.ell).exp();
    let (sb, cb) = last.beta.sin_cos();
    let row = 3 * (m - 1);
    let n = jac.len();
    let mut out = [[T::zero(); 2]; 2];
    for (c, d) in [[-img.u3 * e, -img.u4 * e], [sb, -cb]].into_iter().enumerate() {
        let mut rhs = vec![T::zero(); n];
        rhs[row + 1] = -d[0];
        rhs[row + 2] = -d[1];
        let dz = solve_dense(jac.clone(), rhs).ok_or_else(|| Error::RootNotConverged("singular shooting matrix".into()))?;
        out[0][c] = dz[0];
        out[1][c] = dz[1];
    }
    Ok(out)
}

/// Solves for a Fix-plane point following `symbols` (the branches of the
/// successive entries) and meeting `closure`, from the initial guess
/// `(x0, states0)`; `states0` holds one state per entry before the closure.
pub fn solve_itinerary<T: Real>(
    symbols: &[usize],
    closure: Closure<T>,
    x0: Vec2<T>,
    states0: &[EntryState<T>],
    mp: &ModelParams,
    opts: ShootingOptions,
) -> Result<ShootingSolution<T>> {
    let problem = Problem { symbols, closure, mp };
    if symbols.is_empty() || states0.len() != problem.n_states() || problem.n_states() == 0 {
        return Err(Error::InvalidRequest("itinerary and initial states do not match".into()));
    }
    let mut z = problem.pack(x0, states0);
    let (mut res, mut jac) = problem.evaluate(&z)?;
    let mut r = norm(&res);
    for it in 0..opts.max_iter {
        if r <= opts.tol {
            let (x, states) = problem.unpack(&z);
            return Ok(ShootingSolution { x, states, residual: r, iterations: it });
        }
        let step = solve_dense(jac.clone(), res.clone()).ok_or_else(|| Error::RootNotConverged("singular shooting matrix".into()))?;
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let zn: Vec<T> = z.iter().zip(&step).map(|(a, s)| *a - lambda * *s).collect();
            if let Ok((rn, jn)) = problem.evaluate(&zn) {
                let nr = norm(&rn);
                if nr < r {
                    z = zn;
                    res = rn;
                    jac = jn;
                    r = nr;
                    accepted = true;
                    break;
                }
            }
            lambda = lambda * T::from_f64(0.5);
        }
        if !accepted {
            break;
        }
    }
    if r <= opts.stall_tol {
        let (x, states) = problem.unpack(&z);
        return Ok(ShootingSolution { x, states, residual: r, iterations: opts.max_iter });
    }
    Err(Error::RootNotConverged(format!("shooting residual {r:e}")))
}
