//! Nested neighbourhoods in the Fix-plane realizing a finite itinerary.
//!
//! Level 1 of a chain is a square inscribed in the disc `D_i = V_i ∩ Fix(R)`.
//! Level `d + 1` is the set of points of level `d` whose `d`-th passage
//! enters the local neighbourhood inside a rectangle of the chart `(ln ρ, ψ)`,
//! where `ρ` is the entry radius and `ψ` the exit angle offset relative to
//! the branch the passage lands on. In the Fix-plane these regions are thin
//! twisted strips, so they are stored as chart rectangles and mapped to the
//! plane by multiple shooting; corners and boundary polygons are exported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SigmaPoint;
use crate::global::distance_to_stable;
use crate::local::STABLE_HIT_FRACTION;
use crate::params::ModelParams;
use crate::real::{Dd, Real};

use super::shoot::{shoot, Vec2};
use super::shooting::{entry_sensitivity, solve_itinerary, Closure, EntryState, ShootingOptions};
use super::target::{crossing_target, PairSlot};

const UNIT_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Six-point Gauss-Legendre rule on `[-1, 1]`.
const GAUSS_NODES: [f64; 6] = [
    -0.932_469_514_203_152,
    -0.661_209_386_466_264_5,
    -0.238_619_186_083_196_9,
    0.238_619_186_083_196_9,
    0.661_209_386_466_264_5,
    0.932_469_514_203_152,
];
const GAUSS_WEIGHTS: [f64; 6] = [
    0.171_324_492_379_170_3,
    0.360_761_573_048_138_6,
    0.467_913_934_572_691,
    0.467_913_934_572_691,
    0.360_761_573_048_138_6,
    0.171_324_492_379_170_3,
];

/// Rectangle `|ℓ - ℓ*| ≤ δ1, |ψ - ψ*| ≤ δ2` in the entry chart of passage
/// `symbols.len()`, restricted to points following `symbols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    /// Branches visited before the chart passage.
    pub symbols: Vec<usize>,
    /// Branch the chart passage lands on.
    pub next: usize,
    /// `(ℓ*, ψ*)` of the anchor.
    pub center: [Dd; 2],
    pub half: [f64; 2],
    /// Fix-plane point at the chart center.
    pub x_center: [Dd; 2],
    #[serde(skip)]
    states: Vec<EntryState<Dd>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Axis-aligned square `c + half·t`, `|t_k| ≤ 1`.
    Square {
        center: [Dd; 2],
        half: f64,
    },
    Chart(ChartBox),
}

fn chart_phase<T: Real>(ell: T, mp: &ModelParams) -> T {
    T::from_f64(mp.twist()) * (T::from_f64(mp.section_radius).ln() - ell)
}

fn psi_of<T: Real>(ell: T, beta: T, next: usize, mp: &ModelParams) -> Result<T> {
    Ok(beta - chart_phase(ell, mp) - T::from_f64(mp.branch(next)?.phi_u_anchor))
}

fn beta_of<T: Real>(ell: T, psi: T, next: usize, mp: &ModelParams) -> Result<T> {
    Ok(psi + chart_phase(ell, mp) + T::from_f64(mp.branch(next)?.phi_u_anchor))
}

fn state_f64(s: &EntryState<Dd>) -> EntryState<f64> {
    EntryState { phi_s: s.phi_s.to_f64(), ell: s.ell.to_f64(), beta: s.beta.to_f64() }
}

impl ChartBox {
    fn opts<T: Real>() -> ShootingOptions {
        if T::EPSILON < 1e-20 {
            ShootingOptions { max_iter: 40, ..ShootingOptions::default() }
        } else {
            ShootingOptions { max_iter: 40, tol: 1e-14, stall_tol: 1e-10 }
        }
    }

    fn solve_once<T: Real>(
        &self,
        z: [T; 2],
        x: Vec2<T>,
        states: &[EntryState<T>],
        mp: &ModelParams,
    ) -> Result<(Vec2<T>, Vec<EntryState<T>>)> {
        let beta = beta_of(z[0], z[1], self.next, mp)?;
        let mut guess = states.to_vec();
        if let Some(last) = guess.last_mut() {
            last.ell = z[0];
            last.beta = beta;
        }
        let sol = solve_itinerary(&self.symbols, Closure::Entry { rho: z[0].exp(), beta }, x, &guess, mp, Self::opts::<T>())?;
        Ok((sol.x, sol.states))
    }

    /// Point with chart coordinates `z`, by continuation from `start`, the
    /// solution at chart coordinates `from`.
    fn continue_to<T: Real>(
        &self,
        from: [T; 2],
        start: (Vec2<T>, Vec<EntryState<T>>),
        z: [T; 2],
        mp: &ModelParams,
    ) -> Result<(Vec2<T>, Vec<EntryState<T>>)> {
        let mut err = None;
        for pieces in [1u32, 4, 16] {
            let mut cur = start.clone();
            let mut ok = true;
            for k in 1..=pieces {
                let f = T::from_f64(f64::from(k) / f64::from(pieces));
                let here = [0, 1].map(|c| from[c] + (z[c] - from[c]) * f);
                match self.solve_once(here, cur.0, &cur.1, mp) {
                    Ok(next) => cur = next,
                    Err(e) => {
                        err = Some(e);
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(cur);
            }
        }
        Err(err.unwrap_or_else(|| Error::RootNotConverged("chart point".into())))
    }

    /// Fix-plane point with chart coordinates `z`, by continuation from the center.
    fn solve_chart(&self, z: [Dd; 2], mp: &ModelParams) -> Result<(Vec2<Dd>, Vec<EntryState<Dd>>)> {
        self.continue_to(self.center, (self.x_center, self.states.clone()), z, mp)
    }

    fn chart_point_f64(&self, t: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|c| self.center[c].to_f64() + t[c] * self.half[c])
    }

    fn chart_point(&self, t: [f64; 2]) -> [Dd; 2] {
        [0, 1].map(|c| self.center[c] + Dd::from_f64(t[c] * self.half[c]))
    }

    /// Chart coordinates of `x`, or `None` when `x` does not follow the symbols.
    fn chart_coords(&self, x: [Dd; 2], mp: &ModelParams) -> Option<[Dd; 2]> {
        let sh = shoot(x, self.symbols.len() - 1, mp).ok()?;
        if sh.symbols() != self.symbols {
            return None;
        }
        let ell = sh.entry.r_u().ln();
        let psi = psi_of(ell, sh.entry.u4.atan2(sh.entry.u3), self.next, mp).ok()?;
        Some([ell, self.center[1] + (psi - self.center[1]).wrap_pi()])
    }

    /// `|det ∂x/∂(ℓ, ψ)|` at the point with chart coordinates `z`.
    fn density(&self, z: [Dd; 2], mp: &ModelParams) -> Option<f64> {
        let (x, states) = self.solve_chart(z, mp).ok()?;
        Self::jacobian_det(&self.symbols, x, &states, mp)
    }

    /// The same determinant solved in f64, continuing from `near`, a nearby
    /// f64 solution, when there is one.
    fn density_f64(&self, z: [f64; 2], near: &mut Option<([f64; 2], Vec2<f64>, Vec<EntryState<f64>>)>, mp: &ModelParams) -> Option<f64> {
        let attempt = |from: [f64; 2], x: Vec2<f64>, st: Vec<EntryState<f64>>| self.continue_to(from, (x, st), z, mp).ok();
        let center = self.center.map(|c| c.to_f64());
        let sol = near
            .take()
            .and_then(|(from, x, st)| attempt(from, x, st))
            .or_else(|| attempt(center, self.x_center.map(|c| c.to_f64()), self.states.iter().map(state_f64).collect()))?;
        let det = Self::jacobian_det(&self.symbols, sol.0, &sol.1, mp);
        *near = Some((z, sol.0, sol.1));
        det
    }

    fn jacobian_det<T: Real>(symbols: &[usize], x: Vec2<T>, states: &[EntryState<T>], mp: &ModelParams) -> Option<f64> {
        let s = entry_sensitivity(symbols, x, states, mp).ok()?;
        // ψ - β depends on ℓ only, so the determinant is the one in (ℓ, β)
        Some((s[0][0] * s[1][1] - s[0][1] * s[1][0]).abs().to_f64())
    }
}

impl Region {
    /// Point with box coordinates `t ∈ [-1, 1]²`.
    pub fn point(&self, t: [f64; 2], mp: &ModelParams) -> Result<[Dd; 2]> {
        match self {
            Region::Square { center, half } => Ok([0, 1].map(|c| center[c] + Dd::from_f64(t[c] * half))),
            Region::Chart(c) => c.solve_chart(c.chart_point(t), mp).map(|(x, _)| x),
        }
    }

    fn point_with_states(&self, t: [f64; 2], mp: &ModelParams) -> Result<([Dd; 2], Vec<EntryState<Dd>>)> {
        match self {
            Region::Square { .. } => Ok((self.point(t, mp)?, Vec::new())),
            Region::Chart(c) => c.solve_chart(c.chart_point(t), mp),
        }
    }

    /// Box coordinates of `x`; `None` if `x` is outside the domain of the chart.
    pub fn local(&self, x: [Dd; 2], mp: &ModelParams) -> Option<[f64; 2]> {
        match self {
            Region::Square { center, half } => Some([0, 1].map(|c| (x[c] - center[c]).to_f64() / half)),
            Region::Chart(c) => {
                let z = c.chart_coords(x, mp)?;
                Some([0, 1].map(|k| (z[k] - c.center[k]).to_f64() / c.half[k]))
            }
        }
    }

    pub fn contains(&self, x: [Dd; 2], mp: &ModelParams) -> bool {
        self.local(x, mp).is_some_and(|t| t[0].abs() <= 1.0 && t[1].abs() <= 1.0)
    }

    /// `|det ∂x/∂t|` at box coordinates `t`.
    fn density_at(&self, t: [f64; 2], mp: &ModelParams) -> Option<f64> {
        match self {
            Region::Square { half, .. } => Some(half * half),
            Region::Chart(c) => c.density(c.chart_point(t), mp).map(|d| d * c.half[0] * c.half[1]),
        }
    }

    /// Area in the Fix-plane, by Gauss-Legendre quadrature over the box coordinates.
    pub fn area(&self, mp: &ModelParams) -> Result<f64> {
        if let Region::Square { half, .. } = self {
            return Ok(4.0 * half * half);
        }
        let mut sum = 0.0;
        for (xi, wi) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            for (yj, wj) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let d =
                    self.density_at([*xi, *yj], mp).ok_or_else(|| Error::RootNotConverged("chart point for the area quadrature".into()))?;
                sum += wi * wj * d;
            }
        }
        Ok(sum)
    }

    /// `n` points per edge along the boundary, counter-clockwise from `t = (-1, -1)`.
    pub fn boundary(&self, n: usize, mp: &ModelParams) -> Result<Vec<[Dd; 2]>> {
        boundary_params(n).into_iter().map(|(t, _)| self.point(t, mp)).collect()
    }

    pub fn corners(&self, mp: &ModelParams) -> Result<[[f64; 2]; 4]> {
        let mut out = [[0.0; 2]; 4];
        for (o, t) in out.iter_mut().zip(UNIT_CORNERS) {
            let p = self.point(t, mp)?;
            *o = [p[0].to_f64(), p[1].to_f64()];
        }
        Ok(out)
    }
}

/// Boundary parameters with the box axis they pin (0: `t1 = ±1`, 1: `t2 = ±1`).
fn boundary_params(n: usize) -> Vec<([f64; 2], usize)> {
    let n = n.max(1);
    let mut out = Vec::with_capacity(4 * n);
    for edge in 0..4 {
        for s in 0..n {
            let a = -1.0 + 2.0 * s as f64 / n as f64;
            out.push(match edge {
                0 => ([a, -1.0], 1),
                1 => ([1.0, a], 0),
                2 => ([-a, 1.0], 1),
                _ => ([-1.0, -a], 0),
            });
        }
    }
    out
}

fn max_pairwise(points: &[[f64; 2]]) -> f64 {
    let mut best = 0.0f64;
    for (k, p) in points.iter().enumerate() {
        for q in &points[k + 1..] {
            best = best.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLevel {
    pub depth: usize,
    pub anchor: SigmaPoint<Dd>,
    pub region: Region,
    pub area: f64,
    /// Largest distance between sampled boundary points.
    pub diameter: f64,
    /// Distance of `Π^{depth-1}(anchor)` to the stable trace of the last symbol.
    pub residual: f64,
    /// Halvings of the two chart half-widths needed for containment.
    pub halvings: [u32; 2],
    /// Sampled boundary polygon in the Fix-plane.
    pub boundary: Vec<[f64; 2]>,
    #[serde(skip)]
    states: Vec<EntryState<Dd>>,
}

impl ChainLevel {
    pub fn anchor_xy(&self) -> [Dd; 2] {
        [self.anchor.a, self.anchor.b]
    }

    /// Solved entry states of the anchor's passages.
    pub fn states(&self) -> &[EntryState<Dd>] {
        &self.states
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub slot: PairSlot,
    /// Boundary samples per edge checked for containment.
    pub edge_samples: usize,
    pub max_halvings: u32,
    pub anchor_tol: f64,
    pub shooting: ShootingOptions,
    /// Offset of the initial guess at each level, in the parent's box coordinates.
    pub seed_shift: [f64; 2],
    /// Half-width of the parent-region grid scanned when Newton from the parent anchor fails.
    pub scan_grid: usize,
    /// Use the other crossing of the turn when `slot` cannot be reached.
    pub any_slot: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            slot: PairSlot::First,
            edge_samples: 8,
            max_halvings: 30,
            anchor_tol: 1e-8,
            shooting: ShootingOptions::default(),
            seed_shift: [0.0, 0.0],
            scan_grid: 16,
            any_slot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskChain {
    pub itinerary: Vec<usize>,
    pub windings: Vec<i64>,
    pub slots: Vec<PairSlot>,
    pub levels: Vec<ChainLevel>,
    /// Whether the regions below the first level have been built.
    #[serde(default)]
    pub regions_built: bool,
}

/// Monte-Carlo estimate of `area(child) / area(parent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRatio {
    pub ratio: f64,
    pub stderr: f64,
    /// Ratio of the quadrature areas.
    pub exact: f64,
    pub samples: usize,
}

impl AreaRatio {
    pub fn contracting(&self) -> bool {
        self.ratio + 3.0 * self.stderr < 1.0
    }
}

/// Mean and standard error of the area from uniform samples of the box coordinates.
fn area_mc(region: &Region, samples: usize, rng: &mut ChaCha8Rng, mp: &ModelParams) -> (f64, f64) {
    let mut pts: Vec<[f64; 2]> = (0..samples).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect();
    // serpentine order over a 16x16 grid so each solve starts next to the previous one
    let cell = |t: f64| (((t + 1.0) * 8.0) as i64).min(15);
    pts.sort_by_key(|t| {
        let row = cell(t[1]);
        let col = cell(t[0]);
        (row, if row % 2 == 0 { col } else { -col })
    });
    let mut near = None;
    let values: Vec<f64> = pts
        .iter()
        .filter_map(|&t| match region {
            Region::Square { half, .. } => Some(half * half),
            Region::Chart(c) => c.density_f64(c.chart_point_f64(t), &mut near, mp).map(|d| d * c.half[0] * c.half[1]),
        })
        .map(|d| 4.0 * d)
        .collect();
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Area ratio of two regions, each area estimated by Monte-Carlo integration
/// of the Fix-plane area element over the box coordinates.
pub fn estimate_area_ratio(parent: &Region, child: &Region, samples: usize, seed: u64, mp: &ModelParams) -> AreaRatio {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ap, sp) = area_mc(parent, samples, &mut rng, mp);
    let (ac, sc) = area_mc(child, samples, &mut rng, mp);
    let ratio = ac / ap;
    let stderr = ratio * ((sc / ac).powi(2) + (sp / ap).powi(2)).sqrt();
    let exact = match (parent.area(mp), child.area(mp)) {
        (Ok(p), Ok(c)) => c / p,
        _ => f64::NAN,
    };
    AreaRatio { ratio, stderr, exact, samples }
}

impl DiskChain {
    /// Depth one: the disc `D_i` around `q_i`, represented by its inscribed square.
    pub fn base(i: usize, mp: &ModelParams) -> Result<Self> {
        let b = mp.branch(i)?;
        let center = [Dd::from_f64(b.q_sigma[0]), Dd::from_f64(b.q_sigma[1])];
        let half = 0.999 * mp.v_radius / std::f64::consts::SQRT_2;
        let region = Region::Square { center, half };
        let boundary: Vec<[f64; 2]> = region.boundary(8, mp)?.iter().map(|p| [p[0].to_f64(), p[1].to_f64()]).collect();
        let level = ChainLevel {
            depth: 1,
            anchor: SigmaPoint::on_fix(center[0], center[1]).with_hint(i),
            area: region.area(mp)?,
            diameter: max_pairwise(&boundary),
            region,
            residual: 0.0,
            halvings: [0, 0],
            boundary,
            states: Vec::new(),
        };
        Ok(DiskChain { itinerary: vec![i], windings: Vec::new(), slots: Vec::new(), levels: vec![level], regions_built: true })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn last(&self) -> &ChainLevel {
        self.levels.last().expect("chains have at least one level")
    }

    pub fn anchor(&self) -> SigmaPoint<Dd> {
        self.last().anchor
    }

    pub fn boxes(&self) -> Vec<&Region> {
        self.levels.iter().map(|l| &l.region).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.area).collect()
    }

    /// Quadrature area ratios of consecutive levels.
    pub fn area_ratios(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1].area / w[0].area).collect()
    }

    /// Monte-Carlo area ratios of consecutive levels.
    pub fn measured_area_ratios(&self, samples: usize, seed: u64, mp: &ModelParams) -> Vec<AreaRatio> {
        self.levels
            .windows(2)
            .enumerate()
            .map(|(k, w)| estimate_area_ratio(&w[0].region, &w[1].region, samples, seed.wrapping_add(k as u64), mp))
            .collect()
    }

    /// Appends one level: the next passage lands on `next` after `winding` full turns.
    pub fn extend(&self, next: usize, winding: i64, mp: &ModelParams, opts: &ChainOptions) -> Result<DiskChain> {
        let mut chain = self.push_anchor(next, winding, mp, opts)?;
        chain.build_regions(mp, opts)?;
        Ok(chain)
    }

    /// Appends the anchor of the next level only; its region is left empty
    /// until `build_regions` runs.
    pub fn push_anchor(&self, next: usize, winding: i64, mp: &ModelParams, opts: &ChainOptions) -> Result<DiskChain> {
        let first = self.push_anchor_slot(next, winding, opts.slot, mp, opts);
        match first {
            Err(Error::WindowExhausted { .. }) if opts.any_slot => self.push_anchor_slot(next, winding, opts.slot.other(), mp, opts),
            r => r,
        }
    }

    fn push_anchor_slot(&self, next: usize, winding: i64, slot: PairSlot, mp: &ModelParams, opts: &ChainOptions) -> Result<DiskChain> {
        mp.check_symbol(next)?;
        let d = self.depth();
        let exhausted = || Error::WindowExhausted { depth: d + 1, winding };
        let parent = self.last();

        let (x0, states) = if opts.seed_shift == [0.0, 0.0] {
            (parent.anchor_xy(), parent.states.clone())
        } else {
            parent.region.point_with_states([0.5 * opts.seed_shift[0], 0.5 * opts.seed_shift[1]], mp)?
        };
        let mut itinerary = self.itinerary.clone();
        itinerary.push(next);
        let mut windings = self.windings.clone();
        windings.push(winding);

        let attempt = |x0: Vec2<Dd>,
                       mut states: Vec<EntryState<Dd>>,
                       guess: Option<EntryState<Dd>>|
         -> Option<(Vec2<Dd>, Vec<EntryState<Dd>>, f64)> {
            let pre = shoot(x0, d - 1, mp).ok()?;
            let target = crossing_target(pre.entry.phi_s, next, winding, slot, mp).ok()?;
            if target.rho.to_f64() * (-0.5f64).exp() <= 10.0 * STABLE_HIT_FRACTION * mp.section_radius {
                return None;
            }
            states.push(guess.unwrap_or_else(|| EntryState::from_polar(pre.entry.phi_s, target.rho, target.beta)));
            let entry = Closure::Entry { rho: target.rho, beta: target.beta };
            let stage1 = solve_itinerary(&self.itinerary, entry, x0, &states, mp, opts.shooting).ok()?;
            let hit = Closure::Hit { next, target: [Dd::zero(), Dd::zero()] };
            let sol = solve_itinerary(&self.itinerary, hit, stage1.x, &stage1.states, mp, opts.shooting).ok()?;
            let shot = shoot(sol.x, d, mp).ok()?;
            if shot.symbols() != itinerary || shot.windings() != windings {
                return None;
            }
            let phase = shot.passages[d - 1].phase;
            let in_turn = (phase - Dd::tau() * Dd::from_f64(winding as f64)).to_f64();
            if (in_turn < std::f64::consts::PI) != (slot == PairSlot::First) {
                return None;
            }
            let residual = distance_to_stable(&shot.last_point(), next, mp).ok()?.to_f64();
            (residual <= opts.anchor_tol).then_some((sol.x, sol.states, residual))
        };

        let found = attempt(x0, states, None).or_else(|| {
            // Newton from the parent anchor can land in the wrong basin; seed
            // from the parent-region points that already follow the word.
            let n = opts.scan_grid as i32;
            let grid: Vec<[f64; 2]> = (-n..=n).flat_map(|a| (-n..=n).map(move |b| [a as f64 / n as f64, b as f64 / n as f64])).collect();
            let mut seeds: Vec<(f64, Vec2<Dd>, Vec<EntryState<Dd>>, EntryState<Dd>)> = grid
                .par_iter()
                .filter_map(|&t| {
                    let (x, st) = parent.region.point_with_states(t, mp).ok()?;
                    let shot = shoot(x, d, mp).ok()?;
                    if shot.symbols() != itinerary || shot.windings() != windings {
                        return None;
                    }
                    let pre = shoot(x, d - 1, mp).ok()?;
                    let target = crossing_target(pre.entry.phi_s, next, winding, slot, mp).ok()?;
                    let e = EntryState::from_entry(&pre.entry);
                    let score = (e.ell - target.rho.ln()).to_f64().abs() + (e.beta - target.beta).wrap_pi().to_f64().abs();
                    Some((score, x, st, e))
                })
                .collect();
            seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
            seeds.into_iter().take(8).find_map(|(_, x, st, e)| attempt(x, st, Some(e)))
        });
        let (x, sol_states, residual) = found.ok_or_else(exhausted)?;

        let mut slots = self.slots.clone();
        slots.push(slot);
        let mut levels = self.levels.clone();
        levels.push(ChainLevel {
            depth: d + 1,
            anchor: SigmaPoint::on_fix(x[0], x[1]).with_hint(itinerary[0]),
            region: Region::Square { center: x, half: 0.0 },
            area: 0.0,
            diameter: 0.0,
            residual,
            halvings: [0, 0],
            boundary: Vec::new(),
            states: sol_states,
        });
        Ok(DiskChain { itinerary, windings, slots, levels, regions_built: false })
    }

    /// Builds the regions of all levels around the deepest anchor.
    pub fn build_regions(&mut self, mp: &ModelParams, opts: &ChainOptions) -> Result<()> {
        if self.depth() > 1 {
            let last = self.last();
            let (x, states) = (last.anchor_xy(), last.states.clone());
            self.rebuild_regions(x, &states, mp, opts)?;
        }
        self.regions_built = true;
        Ok(())
    }

    /// Rebuilds the regions of all levels below the first around the chart
    /// coordinates of `x`, the anchor of the deepest level. Since `x` follows
    /// the whole itinerary, every level contains it and can shrink around it.
    fn rebuild_regions(&mut self, x: Vec2<Dd>, states: &[EntryState<Dd>], mp: &ModelParams, opts: &ChainOptions) -> Result<()> {
        let shot = shoot(x, self.depth() - 1, mp).map_err(|_| Error::ContainmentFailure { depth: self.depth() })?;
        for k in 1..self.depth() {
            let st = states[k - 1];
            let next = self.itinerary[k];
            let center = [st.ell, psi_of(st.ell, st.beta, next, mp)?.wrap_pi()];
            let mut chart =
                ChartBox { symbols: self.itinerary[..k].to_vec(), next, center, half: [0.0; 2], x_center: x, states: states[..k].to_vec() };
            let phase = shot.passages[k - 1].phase.to_f64();
            let (halvings, boundary, area) =
                Self::shrink(&mut chart, &self.itinerary[..=k], &self.windings[..k], phase, &self.levels[k - 1].region, mp, opts)?;
            let region = Region::Chart(chart);
            let level = &mut self.levels[k];
            level.area = area;
            level.diameter = max_pairwise(&boundary);
            level.region = region;
            level.halvings = halvings;
            level.boundary = boundary;
        }
        Ok(())
    }

    /// Halves the chart half-widths until every boundary sample follows the
    /// itinerary and lies strictly inside `parent`. Returns the halvings, the
    /// exported boundary and the area.
    fn shrink(
        chart: &mut ChartBox,
        itinerary: &[usize],
        windings: &[i64],
        phase: f64,
        parent: &Region,
        mp: &ModelParams,
        opts: &ChainOptions,
    ) -> Result<([u32; 2], Vec<[f64; 2]>, f64)> {
        let d = windings.len();
        let tau = std::f64::consts::TAU;
        let n = windings[d - 1] as f64;
        let to_edge = (phase - tau * n).min(tau * (n + 1.0) - phase);
        let half_phase = (0.45 * std::f64::consts::PI).min(0.9 * to_edge);
        let tu = mp.branch(chart.next)?.unstable_tangent();
        chart.half = [half_phase / mp.twist(), (mp.v_radius / crate::linalg::norm(&tu)).min(mp.c_radius)];
        let mut halvings = [0u32; 2];
        loop {
            let mut bad = [false, false];
            for (t, axis) in boundary_params(opts.edge_samples) {
                if bad[axis] {
                    continue;
                }
                let good = |t: [f64; 2]| {
                    chart.solve_chart(chart.chart_point(t), mp).is_ok_and(|(p, _)| {
                        shoot(p, d, mp).is_ok_and(|sh| sh.symbols() == itinerary && sh.windings() == windings)
                            && parent.local(p, mp).is_some_and(|s| s[0].abs() < 1.0 && s[1].abs() < 1.0)
                    })
                };
                if !good(t) {
                    bad[axis] = true;
                    // Blame the other half-width too when the failure persists on the midline.
                    let mut mid = t;
                    mid[axis] = 0.0;
                    if !bad[1 - axis] && !good(mid) {
                        bad[1 - axis] = true;
                    }
                }
            }
            if !bad[0] && !bad[1] {
                let region = Region::Chart(chart.clone());
                let finished = region.boundary(2 * opts.edge_samples, mp).and_then(|b| Ok((b, region.area(mp)?)));
                match finished {
                    Ok((b, area)) => return Ok((halvings, b.iter().map(|p| [p[0].to_f64(), p[1].to_f64()]).collect(), area)),
                    Err(_) => bad = [true, true],
                }
            }
            for a in 0..2 {
                if bad[a] {
                    halvings[a] += 1;
                    chart.half[a] *= 0.5;
                }
            }
            if halvings[0].max(halvings[1]) > opts.max_halvings {
                return Err(Error::ContainmentFailure { depth: d + 1 });
            }
        }
    }

    pub fn to_export(&self, mp: &ModelParams) -> Result<ChainExport> {
        let mut boxes = Vec::with_capacity(self.depth());
        for l in &self.levels {
            boxes.push(BoxExport {
                depth: l.depth,
                corners: l.region.corners(mp)?,
                boundary: l.boundary.clone(),
                area: l.area,
                diameter: l.diameter,
                region: l.region.clone(),
            });
        }
        Ok(ChainExport {
            itinerary: self.itinerary.clone(),
            windings: self.windings.clone(),
            slots: self.slots.clone(),
            boxes,
            anchor: self.anchor().to_f64(),
            anchor_dd: self.last().anchor_xy(),
            areas: self.areas(),
            area_ratios: self.area_ratios(),
            residual: self.last().residual,
        })
    }
}

/// Whether two closed polygons are disjoint: no crossing edges and neither
/// contains a vertex of the other.
pub fn polygons_disjoint(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    let edges = |p: &[[f64; 2]]| (0..p.len()).map(|k| (p[k], p[(k + 1) % p.len()])).collect::<Vec<_>>();
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    for (p1, p2) in edges(a) {
        for (q1, q2) in edges(b) {
            let d1 = cross(q1, q2, p1);
            let d2 = cross(q1, q2, p2);
            let d3 = cross(p1, p2, q1);
            let d4 = cross(p1, p2, q2);
            if d1 == 0.0 && d2 == 0.0 {
                // collinear: compare the extents along the common line
                let ext = |a: [f64; 2], b: [f64; 2], k: usize| (a[k].min(b[k]), a[k].max(b[k]));
                let overlap = (0..2).all(|k| {
                    let (lo1, hi1) = ext(p1, p2, k);
                    let (lo2, hi2) = ext(q1, q2, k);
                    lo1 <= hi2 && lo2 <= hi1
                });
                if overlap {
                    return false;
                }
            } else if d1 * d2 <= 0.0 && d3 * d4 <= 0.0 {
                return false;
            }
        }
    }
    !(point_in_polygon(a[0], b) || point_in_polygon(b[0], a))
}

pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]) {
            inside = !inside;
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxExport {
    pub depth: usize,
    pub corners: [[f64; 2]; 4],
    pub boundary: Vec<[f64; 2]>,
    pub area: f64,
    pub diameter: f64,
    pub region: Region,
}

/// JSON form of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainExport {
    pub itinerary: Vec<usize>,
    pub windings: Vec<i64>,
    pub slots: Vec<PairSlot>,
    pub boxes: Vec<BoxExport>,
    pub anchor: SigmaPoint<f64>,
    /// Anchor coordinates `(a, b)` in double-double, as `[hi, lo]` pairs.
    pub anchor_dd: [Dd; 2],
    pub areas: Vec<f64>,
    pub area_ratios: Vec<f64>,
    pub residual: f64,
}

/// Builds the chain for `itinerary` (length `k ≥ 1`) and `windings` (length `k - 1`).
pub fn refine_nested_disk(itinerary: &[usize], windings: &[i64], mp: &ModelParams) -> Result<DiskChain> {
    refine_nested_disk_with(itinerary, windings, mp, &ChainOptions::default())
}

pub fn refine_nested_disk_with(itinerary: &[usize], windings: &[i64], mp: &ModelParams, opts: &ChainOptions) -> Result<DiskChain> {
    let mut chain = realize_anchor(itinerary, windings, mp, opts)?;
    chain.build_regions(mp, opts)?;
    Ok(chain)
}

/// The chain of anchors for `itinerary` without building the regions.
pub fn realize_anchor(itinerary: &[usize], windings: &[i64], mp: &ModelParams, opts: &ChainOptions) -> Result<DiskChain> {
    if itinerary.is_empty() {
        return Err(Error::InvalidRequest("empty itinerary".into()));
    }
    if windings.len() + 1 != itinerary.len() {
        return Err(Error::InvalidRequest(format!("{} windings given for an itinerary of length {}", windings.len(), itinerary.len())));
    }
    let mut chain = DiskChain::base(itinerary[0], mp)?;
    for (next, n) in itinerary[1..].iter().zip(windings) {
        chain = if opts.seed_shift == [0.0, 0.0] { chain.push_anchor(*next, *n, mp, opts)? } else { chain.extend(*next, *n, mp, opts)? };
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(c: [f64; 2], h: f64) -> Region {
        Region::Square { center: [Dd::from_f64(c[0]), Dd::from_f64(c[1])], half: h }
    }

    #[test]
    fn square_local_coordinates_roundtrip() {
        let mp = ModelParams::default_for(2);
        let b = square([0.5, -0.1], 1e-3);
        let p = b.point([0.3, -0.7], &mp).unwrap();
        let t = b.local(p, &mp).unwrap();
        assert!((t[0] - 0.3).abs() < 1e-12 && (t[1] + 0.7).abs() < 1e-12);
        assert!(b.contains(p, &mp));
        assert!(!b.contains(b.point([1.1, 0.0], &mp).unwrap(), &mp));
    }

    #[test]
    fn identical_squares_have_ratio_one() {
        let mp = ModelParams::default_for(2);
        let b = square([0.0, 0.0], 1.0);
        let r = estimate_area_ratio(&b, &b, 100, 1, &mp);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.exact, 1.0);
    }

    #[test]
    fn polygon_tests() {
        let sq = |c: [f64; 2], h: f64| UNIT_CORNERS.map(|t| [c[0] + h * t[0], c[1] + h * t[1]]);
        assert!(polygons_disjoint(&sq([0.0, 0.0], 1.0), &sq([2.5, 0.0], 1.0)));
        assert!(!polygons_disjoint(&sq([0.0, 0.0], 1.0), &sq([1.5, 1.5], 1.0)));
        assert!(!polygons_disjoint(&sq([0.0, 0.0], 1.0), &sq([0.0, 0.0], 0.2)));
        assert!(point_in_polygon([0.1, 0.1], &sq([0.0, 0.0], 1.0)));
    }

    #[test]
    fn gauss_rule_integrates_quintics() {
        let s: f64 = GAUSS_NODES.iter().zip(GAUSS_WEIGHTS).map(|(x, w)| w * (x.powi(4) + x.powi(5))).sum();
        assert!((s - 0.4).abs() < 1e-14);
    }

    #[test]
    fn base_level_is_the_disc() {
        let mp = ModelParams::default_for(2);
        let c = DiskChain::base(2, &mp).unwrap();
        assert_eq!(c.depth(), 1);
        assert_eq!(c.anchor().to_f64().a, mp.branches[1].q_sigma[0]);
        assert!(c.last().diameter < 2.0 * mp.v_radius);
    }
}
