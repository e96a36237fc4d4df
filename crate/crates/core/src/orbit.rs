//! Symmetric orbits: secondary homoclinic points, switching points,
//! reversible periodic points and the decay of super-homoclinic orbits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SigmaPoint;
use crate::global::{
    branch_of, distance_to_stable, distance_to_unstable, global_map_s_on, return_map, return_map_inverse, stop_of, trace_orbit, OrbitStop,
    Passage,
};
use crate::local::STABLE_HIT_FRACTION;
use crate::params::ModelParams;
use crate::real::{Dd, Real, Wide};
use crate::search::chain::{realize_anchor, refine_nested_disk_with, ChainOptions, DiskChain};
use crate::search::shoot::shoot;
use crate::search::shooting::{solve_itinerary, Closure, EntryState, ShootingOptions};
use crate::search::target::{crossing_target, PairSlot};
use crate::spiral::find_spiral_line_intersections;

/// Winding used to extend words when none is implied by the request.
pub const DEFAULT_WINDING: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicPoint {
    pub point: SigmaPoint<Dd>,
    pub itinerary: Vec<usize>,
    pub windings: Vec<i64>,
    pub slots: Vec<PairSlot>,
    /// Distance of `Π^{k-1}(point)` to `W^s_{i_k}`.
    pub residual: f64,
    /// Distance of `Π^{-(k-1)}(point)` to `W^u_{i_k}`.
    pub backward_residual: f64,
}

/// Outcome of iterating a homoclinic point past its last symbol in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomoclinicCheck {
    pub forward_stop: OrbitStop,
    pub backward_stop: OrbitStop,
    /// Steps completed forward and backward before the stop.
    pub forward_steps: usize,
    pub backward_steps: usize,
}

impl HomoclinicCheck {
    /// `W^s` hit after `k - 1` returns and `W^u` hit after `k - 1` inverse returns.
    pub fn is_homoclinic(&self, k: usize) -> bool {
        self.forward_stop == OrbitStop::StableManifoldHit
            && self.backward_stop == OrbitStop::UnstableManifoldHit
            && self.forward_steps + 1 == k
            && self.backward_steps + 1 == k
    }
}

impl HomoclinicPoint {
    pub fn check(&self, mp: &ModelParams) -> Result<HomoclinicCheck> {
        let k = self.itinerary.len();
        let tr = trace_orbit(&self.point, k + 1, k + 1, mp)?;
        let backward_steps = tr.steps.iter().filter(|s| s.step < 0).count();
        let forward_steps = tr.steps.iter().filter(|s| s.step > 0).count();
        Ok(HomoclinicCheck { forward_stop: tr.forward_stop, backward_stop: tr.backward_stop, forward_steps, backward_steps })
    }

    fn from_chain(chain: &DiskChain, mp: &ModelParams) -> Result<Self> {
        let point = chain.anchor();
        let k = chain.depth();
        let last = *chain.itinerary.last().expect("nonempty itinerary");
        let (residual, backward_residual) = if k == 1 {
            (0.0, 0.0)
        } else {
            let mut back = point;
            for _ in 1..k {
                back = match return_map_inverse(&back, mp)? {
                    Passage::Landed(r) => r.point,
                    Passage::Escaped(_) => return Err(Error::DomainError("inverse orbit escaped".into())),
                };
            }
            (chain.last().residual, distance_to_unstable(&back, last, mp)?.to_f64())
        };
        Ok(HomoclinicPoint {
            point,
            itinerary: chain.itinerary.clone(),
            windings: chain.windings.clone(),
            slots: chain.slots.clone(),
            residual,
            backward_residual,
        })
    }
}

/// Secondary homoclinic points `q^m_{ij}`: the preimages in `D_i ∩ Fix(R)` of
/// the crossings of the spiral with `W^s_j`, refined by Newton's method.
pub fn find_secondary_homoclinics(i: usize, j: usize, turns: [i64; 2], mp: &ModelParams) -> Result<Vec<HomoclinicPoint>> {
    let crossings = find_spiral_line_intersections(i, j, turns, mp)?;
    let mut out = Vec::with_capacity(crossings.len());
    for c in crossings {
        let x0 = c.preimage;
        let z = global_map_s_on(&SigmaPoint::on_fix(x0[0], x0[1]), i, mp)?;
        let hit = Closure::Hit { next: j, target: [Dd::zero(), Dd::zero()] };
        let sol = solve_itinerary(&[i], hit, x0, &[EntryState::from_entry(&z)], mp, ShootingOptions::default())?;
        let x = sol.x;
        let shot = shoot(x, 1, mp).map_err(|e| Error::RootNotConverged(format!("refined point does not land: {e:?}")))?;
        if shot.symbols() != [i, j] || shot.windings() != [c.turn_index] {
            return Err(Error::RootNotConverged(format!("refined point of turn {} changed its itinerary", c.turn_index)));
        }
        let residual = distance_to_stable(&shot.last_point(), j, mp)?.to_f64();
        if !(residual <= 1e-9) {
            return Err(Error::RootNotConverged(format!("best residual {residual:e}")));
        }
        let point = SigmaPoint::on_fix(x[0], x[1]).with_hint(i);
        let back = match return_map_inverse(&point, mp)? {
            Passage::Landed(r) => r.point,
            Passage::Escaped(_) => return Err(Error::DomainError("inverse orbit escaped".into())),
        };
        out.push(HomoclinicPoint {
            point,
            itinerary: vec![i, j],
            windings: vec![c.turn_index],
            slots: vec![c.pair_slot],
            residual,
            backward_residual: distance_to_unstable(&back, j, mp)?.to_f64(),
        });
    }
    Ok(out)
}

/// Homoclinic point realizing `itinerary` with the given windings, then hitting `W^s`.
pub fn homoclinic_for_word(itinerary: &[usize], windings: &[i64], mp: &ModelParams) -> Result<(HomoclinicPoint, DiskChain)> {
    let chain = refine_nested_disk_with(itinerary, windings, mp, &ChainOptions::default())?;
    Ok((HomoclinicPoint::from_chain(&chain, mp)?, chain))
}

pub fn write_homoclinic_csv<W: Write>(points: &[HomoclinicPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["itinerary", "windings", "slots", "a", "b", "c", "residual", "backward_residual"])?;
    for h in points {
        let p = h.point.to_f64();
        wr.write_record([
            join(&h.itinerary),
            join(&h.windings),
            h.slots.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" "),
            format!("{:.17e}", p.a),
            format!("{:.17e}", p.b),
            format!("{:.17e}", p.c),
            format!("{:e}", h.residual),
            format!("{:e}", h.backward_residual),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPoint {
    pub point: SigmaPoint<Dd>,
    pub itinerary: Vec<usize>,
    pub windings: Vec<i64>,
    /// Symbols of `x, Π(x), …` and of `x, Π^{-1}(x), …`, as many as the itinerary.
    pub forward_symbols: Vec<usize>,
    pub backward_symbols: Vec<usize>,
    pub chain: DiskChain,
}

impl SwitchingPoint {
    pub fn shadows(&self) -> bool {
        self.forward_symbols == self.itinerary && self.backward_symbols == self.itinerary
    }

    /// Diameter of the deepest region of the chain.
    pub fn diameter(&self) -> f64 {
        self.chain.last().diameter
    }
}

/// Symbols of `y` and of its first `k - 1` images under `Π` (or `Π^{-1}`).
pub fn symbols_along(y: &SigmaPoint<Dd>, k: usize, backward: bool, mp: &ModelParams) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let Some(first) = branch_of(y, mp) else { return out };
    out.push(first);
    let mut cur = *y;
    while out.len() < k {
        let step = if backward { return_map_inverse(&cur, mp) } else { return_map(&cur, mp) };
        match step {
            Ok(Passage::Landed(r)) => {
                out.push(r.symbol);
                cur = r.point;
            }
            _ => break,
        }
    }
    out
}

/// Point of `Fix(R)` whose forward and backward orbits visit `V_{i_1}, V_{i_2}, …`.
///
/// The itinerary is extended by repeating its last symbol once, so that the
/// point is the anchor of a chain one level deeper than the itinerary and its
/// orbit continues past the last requested symbol. `windings` has one entry per
/// passage, optionally followed by the winding of the extra passage (default:
/// repeat the last one).
pub fn approximate_switching_point(itinerary: &[usize], windings: &[i64], mp: &ModelParams) -> Result<SwitchingPoint> {
    approximate_switching_point_with(itinerary, windings, mp, &ChainOptions::default())
}

pub fn approximate_switching_point_with(
    itinerary: &[usize],
    windings: &[i64],
    mp: &ModelParams,
    opts: &ChainOptions,
) -> Result<SwitchingPoint> {
    let (mut word, mut wind) = (itinerary.to_vec(), windings.to_vec());
    let last = *itinerary.last().ok_or_else(|| Error::InvalidRequest("empty itinerary".into()))?;
    let k = itinerary.len();
    if wind.len() + 1 == k {
        wind.push(windings.last().copied().unwrap_or(DEFAULT_WINDING));
    } else if wind.len() != k {
        return Err(Error::InvalidRequest(format!("{} windings given for an itinerary of length {k}", windings.len())));
    }
    let windings = &windings[..k - 1];
    word.push(last);
    let chain = refine_nested_disk_with(&word, &wind, mp, opts)?;
    let point = chain.anchor();
    Ok(SwitchingPoint {
        point,
        itinerary: itinerary.to_vec(),
        windings: windings.to_vec(),
        forward_symbols: symbols_along(&point, k, false, mp),
        backward_symbols: symbols_along(&point, k, true, mp),
        chain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub point: SigmaPoint<Dd>,
    pub half_period: usize,
    /// Distance of `Π^{2m}(point)` to `point`.
    pub closure_error: f64,
    /// `|c|` of `Π^m(point)`.
    pub fix_residual: f64,
    pub prefix: Vec<usize>,
    pub windings: Vec<i64>,
    /// Symbols along one period.
    pub word: Vec<usize>,
    /// Whether the orbit was re-solved and measured in [`Wide`] arithmetic;
    /// `point` is then the double-double rounding of that solution.
    #[serde(default)]
    pub extended: bool,
}

/// Closure errors above this are double-double rounding amplified along the
/// orbit rather than a property of the orbit; such orbits are re-solved in [`Wide`].
const DD_CLOSURE_FLOOR: f64 = 1e-14;

/// Reversible periodic point following `prefix` (length `m + 1 ≥ 2`), with
/// `Π^m(p) ∈ Fix(R)`; the closing passage enters with the radius of the
/// first crossing of `W^s` on turn `windings[m-1]`.
pub fn find_reversible_periodic(prefix: &[usize], windings: &[i64], mp: &ModelParams) -> Result<PeriodicPoint> {
    find_reversible_periodic_with(prefix, windings, PairSlot::First, mp).or_else(|e| match e {
        Error::InvalidRequest(_) => Err(e),
        _ => find_reversible_periodic_with(prefix, windings, PairSlot::Second, mp).map_err(|_| e),
    })
}

struct Closed {
    word: Vec<usize>,
    windings: Vec<i64>,
    fix_residual: f64,
    closure_error: f64,
}

/// Iterates `2m` returns from `point`.
fn close_orbit<T: Real>(point: &SigmaPoint<T>, m: usize, mp: &ModelParams) -> Result<Closed> {
    let first = branch_of(point, mp).ok_or_else(|| Error::DomainError("periodic point outside every V_i".into()))?;
    let mut cur = *point;
    let mut word = vec![first];
    let mut windings = Vec::new();
    let mut fix_residual = f64::NAN;
    for step in 1..=2 * m {
        let r = match return_map(&cur, mp)? {
            Passage::Landed(r) => r,
            Passage::Escaped(_) => return Err(Error::RootNotConverged(format!("orbit escaped at step {step}"))),
        };
        cur = r.point;
        if step < 2 * m {
            word.push(r.symbol);
        }
        if step <= m {
            windings.push(r.windings);
        }
        if step == m {
            fix_residual = cur.c.abs().to_f64();
        }
    }
    Ok(Closed { word, windings, fix_residual, closure_error: cur.distance(point).to_f64() })
}

pub fn find_reversible_periodic_with(prefix: &[usize], windings: &[i64], slot: PairSlot, mp: &ModelParams) -> Result<PeriodicPoint> {
    if prefix.len() < 2 {
        return Err(Error::InvalidRequest("a periodic orbit needs at least one passage (m ≥ 1)".into()));
    }
    if windings.len() + 1 != prefix.len() {
        return Err(Error::InvalidRequest(format!("{} windings given for a prefix of length {}", windings.len(), prefix.len())));
    }
    let m = prefix.len() - 1;
    let closing = prefix[m];
    let base = realize_anchor(&prefix[..m], &windings[..m - 1], mp, &ChainOptions::default())?;
    let x0 = base.last().anchor_xy();
    let pre = shoot(x0, m - 1, mp).map_err(|e| Error::RootNotConverged(format!("{e:?}")))?;
    let target = crossing_target(pre.entry.phi_s, closing, windings[m - 1], slot, mp)?;
    if target.rho.to_f64() <= 10.0 * STABLE_HIT_FRACTION * mp.section_radius {
        return Err(Error::WindowExhausted { depth: m + 1, winding: windings[m - 1] });
    }
    let mut states = base.last().states().to_vec();
    let phi_c = Dd::from_f64(mp.branch(closing)?.phi_u_anchor);
    states.push(EntryState::from_polar(pre.entry.phi_s, target.rho, phi_c + target.phase));
    let closure = Closure::Fix { next: closing, rho: target.rho };
    let sol = solve_itinerary(&prefix[..m], closure, x0, &states, mp, ShootingOptions::default())?;
    let mut point = SigmaPoint::on_fix(sol.x[0], sol.x[1]).with_hint(prefix[0]);
    let mut closed = close_orbit(&point, m, mp)?;
    let mut extended = false;
    if closed.closure_error > DD_CLOSURE_FLOOR {
        let lift = |x: Dd| Wide::from_dd(x);
        let states: Vec<EntryState<Wide>> =
            sol.states.iter().map(|s| EntryState { phi_s: lift(s.phi_s), ell: lift(s.ell), beta: lift(s.beta) }).collect();
        let closure = Closure::Fix { next: closing, rho: lift(target.rho) };
        let opts = ShootingOptions { max_iter: 12, tol: 1e-37, stall_tol: 1e-33 };
        let wide = solve_itinerary(&prefix[..m], closure, sol.x.map(lift), &states, mp, opts)?;
        let wp = SigmaPoint::on_fix(wide.x[0], wide.x[1]).with_hint(prefix[0]);
        closed = close_orbit(&wp, m, mp)?;
        point = SigmaPoint::on_fix(wide.x[0].to_dd(), wide.x[1].to_dd()).with_hint(prefix[0]);
        extended = true;
    }
    if closed.word[..=m] != *prefix || closed.windings != windings {
        return Err(Error::RootNotConverged(format!("periodic orbit follows {:?} with windings {:?}", closed.word, closed.windings)));
    }
    if !(closed.fix_residual <= 1e-9) {
        return Err(Error::RootNotConverged(format!("Π^m(p) leaves Fix(R) by {:e}", closed.fix_residual)));
    }
    Ok(PeriodicPoint {
        point,
        half_period: m,
        closure_error: closed.closure_error,
        fix_residual: closed.fix_residual,
        prefix: prefix.to_vec(),
        windings: windings.to_vec(),
        word: closed.word,
        extended,
    })
}

pub fn write_periodic_csv<W: Write>(points: &[PeriodicPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["prefix", "windings", "half_period", "a", "b", "closure_error", "fix_residual", "word"])?;
    for p in points {
        let q = p.point.to_f64();
        wr.write_record([
            join(&p.prefix),
            join(&p.windings),
            p.half_period.to_string(),
            format!("{:.17e}", q.a),
            format!("{:.17e}", q.b),
            format!("{:e}", p.closure_error),
            format!("{:e}", p.fix_residual),
            join(&p.word),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Distances of `Π^j(x)` to `{q_1, …, q_N}`, forward and backward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub depth: usize,
    /// `d_j` for `j = 0, 1, …`; shorter than `depth` if the orbit stopped.
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub forward_stop: OrbitStop,
    pub backward_stop: OrbitStop,
    /// Largest `|d_j - d_{-j}|`.
    pub symmetry_error: f64,
    /// `d_{k-1} < d_1`.
    pub decays: bool,
    /// Minima over sliding windows of `window` steps never increase and end below their start.
    pub window_min_decreasing: bool,
    pub window: usize,
}

fn nearest_q(y: &SigmaPoint<Dd>, mp: &ModelParams) -> f64 {
    mp.branches
        .iter()
        .map(|b| {
            let q = SigmaPoint::new(Dd::from_f64(b.q_sigma[0]), Dd::from_f64(b.q_sigma[1]), Dd::zero());
            y.distance(&q).to_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn verify_superhomoclinic(x: &SigmaPoint<Dd>, k: usize, mp: &ModelParams) -> ConvergenceReport {
    let walk = |backward: bool| {
        let mut d = vec![nearest_q(x, mp)];
        let mut cur = *x;
        let mut stop = OrbitStop::Completed;
        while d.len() < k {
            let step = if backward { return_map_inverse(&cur, mp) } else { return_map(&cur, mp) };
            match step {
                Ok(Passage::Landed(r)) => {
                    cur = r.point;
                    d.push(nearest_q(&cur, mp));
                }
                Ok(Passage::Escaped(_)) => {
                    stop = OrbitStop::Escaped;
                    break;
                }
                Err(e) => {
                    stop = stop_of(&e);
                    break;
                }
            }
        }
        (d, stop)
    };
    let (forward, forward_stop) = walk(false);
    let (backward, backward_stop) = walk(true);
    let symmetry_error = forward.iter().zip(&backward).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let complete = forward.len() == k.max(1) && backward.len() == k.max(1);
    let decays = complete && k >= 3 && forward[k - 1] < forward[1];
    let window = 2;
    let minima: Vec<f64> =
        forward[1.min(forward.len())..].windows(window).map(|w| w.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let window_min_decreasing =
        complete && minima.len() >= 2 && minima.windows(2).all(|w| w[1] <= w[0]) && minima[minima.len() - 1] < minima[0];
    ConvergenceReport { depth: k, forward, backward, forward_stop, backward_stop, symmetry_error, decays, window_min_decreasing, window }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_needs_a_passage() {
        let mp = ModelParams::default_for(2);
        assert!(matches!(find_reversible_periodic(&[1], &[], &mp), Err(Error::InvalidRequest(_))));
    }

    #[test]
    fn base_point_report_stops_at_once() {
        let mp = ModelParams::default_for(2);
        let q = SigmaPoint::on_fix(Dd::from_f64(0.5), Dd::zero());
        let rep = verify_superhomoclinic(&q, 4, &mp);
        assert_eq!(rep.forward_stop, OrbitStop::StableManifoldHit);
        assert!(!rep.decays);
    }
}
