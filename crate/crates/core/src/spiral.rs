//! Spiralling sheets on Σ and their intersections with the stable traces.
//!
//! The image `Π(D_i)` near `q_j` is a surface winding around `W^u_j`. It is
//! cut by the plane through `q_j` spanned by the tangent of `W^s_j` and the
//! normal of the pair of traces, which is transverse to `W^u_j`. The cut is
//! a planar spiral around `q_j`, parametrized by `s` with entry radius
//! `ρ(s)` equal to that of a seed curve in `D_i`. `W^s_j` is the X-axis of
//! the plane, so the zeros of `Y` are homoclinic points.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{InPoint, SigmaPoint};
use crate::global::{distance_to_stable, forced_landing, global_map_s_jacobian_on, global_map_s_on};
use crate::linalg::{self, Vec3};
use crate::local::STABLE_HIT_FRACTION;
use crate::params::ModelParams;
use crate::real::{Dd, Real};
use crate::search::shoot::{newton2, NewtonOptions};
use crate::search::target::PairSlot;

/// Ray `origin + d0 e^{-s} direction` in the Fix-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRay {
    pub branch: usize,
    pub origin: [f64; 2],
    pub direction: [f64; 2],
    pub d0: f64,
}

impl SeedRay {
    /// Ray towards `q_i` from the direction at `angle`, starting at distance `d0`.
    pub fn radial(i: usize, angle: f64, d0: f64, mp: &ModelParams) -> Result<Self> {
        let q = mp.branch(i)?.q_sigma;
        Ok(SeedRay { branch: i, origin: q, direction: [angle.cos(), angle.sin()], d0 })
    }

    pub fn default_for(i: usize, mp: &ModelParams) -> Result<Self> {
        Self::radial(i, 0.3, 0.9 * mp.v_radius, mp)
    }

    pub fn point(&self, s: Dd) -> [Dd; 2] {
        let f = Dd::from_f64(self.d0) * (-s).exp();
        [0, 1].map(|k| Dd::from_f64(self.origin[k]) + f * Dd::from_f64(self.direction[k]))
    }
}

/// Orthonormal frame of the slice plane at `q_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePlane {
    pub origin: [f64; 3],
    /// Unit tangent of `W^s_j`.
    pub ex: [f64; 3],
    pub ey: [f64; 3],
    pub normal: [f64; 3],
}

impl SlicePlane {
    pub fn at(j: usize, mp: &ModelParams) -> Result<Self> {
        let b = mp.branch(j)?;
        let unit = |v: [f64; 3]| linalg::scale(&v, 1.0 / linalg::norm(&v));
        let (ts, tu) = (b.stable_tangent(), b.unstable_tangent());
        let ex = unit(ts);
        let pair = linalg::cross(&ts, &tu);
        if linalg::norm(&pair) < 1e-12 * linalg::norm(&ts) * linalg::norm(&tu) {
            return Err(Error::DomainError(format!("stable and unstable traces of branch {j} are tangent")));
        }
        let ey = unit(pair);
        Ok(SlicePlane { origin: b.q(), ex, ey, normal: linalg::cross(&ex, &ey) })
    }

    fn component<T: Real>(&self, y: &SigmaPoint<T>, axis: [f64; 3]) -> T {
        let d: Vec3<T> = linalg::sub(&y.coords(), &linalg::lift_vec(self.origin));
        linalg::dot(&d, &linalg::lift_vec(axis))
    }

    pub fn offset<T: Real>(&self, y: &SigmaPoint<T>) -> T {
        self.component(y, self.normal)
    }

    pub fn planar<T: Real>(&self, y: &SigmaPoint<T>) -> [T; 2] {
        [self.component(y, self.ex), self.component(y, self.ey)]
    }
}

/// Point of the sheet on the slice plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetPoint {
    pub s: Dd,
    /// Fix-plane preimage.
    pub x: [Dd; 2],
    pub landing: SigmaPoint<Dd>,
    pub planar: [Dd; 2],
    pub rho: Dd,
    /// Swept phase `ωT` of the passage.
    pub phase: Dd,
    /// Exit angle offset from `φ_j`.
    pub psi: Dd,
}

impl SheetPoint {
    pub fn turn(&self) -> i64 {
        (self.phase / Dd::tau()).floor().to_f64() as i64
    }

    pub fn slot(&self) -> PairSlot {
        let inner = self.phase - Dd::tau() * Dd::from_f64(self.turn() as f64);
        if inner.to_f64() < std::f64::consts::PI {
            PairSlot::First
        } else {
            PairSlot::Second
        }
    }

    /// Whether the passage is a genuine visit: preimage in `D_i`, exit in `C_j`, landing in `V_j`.
    fn valid(&self, i: usize, j: usize, mp: &ModelParams) -> bool {
        let (qi, qj) = (mp.branches[i - 1].q_sigma, mp.branches[j - 1].q());
        let dx = (self.x[0].to_f64() - qi[0]).hypot(self.x[1].to_f64() - qi[1]);
        let y = self.landing.to_f64().coords();
        let dy = linalg::norm(&linalg::sub(&y, &qj));
        dx < mp.v_radius && dy < mp.v_radius && self.psi.to_f64().abs() < mp.c_radius
    }
}

struct Sheet<'a> {
    seed: SeedRay,
    j: usize,
    plane: SlicePlane,
    mp: &'a ModelParams,
}

impl Sheet<'_> {
    fn entry(&self, x: [Dd; 2]) -> Result<InPoint<Dd>> {
        global_map_s_on(&SigmaPoint::on_fix(x[0], x[1]), self.seed.branch, self.mp)
    }

    /// Fix-plane point whose entry has unstable-plane coordinates `w`.
    fn preimage(&self, w: [Dd; 2], guess: [Dd; 2]) -> Result<[Dd; 2]> {
        let i = self.seed.branch;
        let f = |x: [Dd; 2]| {
            let y = SigmaPoint::on_fix(x[0], x[1]);
            let z = global_map_s_on(&y, i, self.mp).ok()?;
            let d = global_map_s_jacobian_on(&y, i, self.mp).ok()?;
            Some(([z.u3, z.u4], [[d[1][0], d[1][1]], [d[2][0], d[2][1]]]))
        };
        newton2(f, guess, w, NewtonOptions { max_iter: 40, tol: 1e-30, stall_tol: 1e-26 })
    }

    fn at_beta(&self, rho: Dd, beta: Dd, guess: [Dd; 2]) -> Result<([Dd; 2], SigmaPoint<Dd>, Dd)> {
        let (sb, cb) = beta.sin_cos();
        let x = self.preimage([rho * cb, rho * sb], guess)?;
        let (y, _, phase) = forced_landing(&self.entry(x)?, self.j, self.mp)?;
        Ok((x, y, phase))
    }

    /// The sheet point at parameter `s`, starting the solve from `guess`.
    fn point(&self, s: Dd, guess: Option<[Dd; 2]>) -> Result<SheetPoint> {
        let mp = self.mp;
        let seed = self.seed.point(s);
        let rho = self.entry(seed)?.r_u();
        if rho.to_f64() <= STABLE_HIT_FRACTION * mp.section_radius {
            return Err(Error::StableManifoldHit { radius: rho.to_f64() });
        }
        let phase = Dd::from_f64(mp.twist()) * (Dd::from_f64(mp.section_radius).ln() - rho.ln());
        let phi_j = Dd::from_f64(mp.branch(self.j)?.phi_u_anchor);
        let mut guess = guess.unwrap_or(seed);
        // secant on the entry angle for a zero offset from the slice plane
        let mut b0 = phi_j + phase;
        let (x0, y0, _) = self.at_beta(rho, b0, guess)?;
        guess = x0;
        let mut g0 = self.plane.offset(&y0);
        let mut b1 = b0 + Dd::from_f64(1e-4);
        let mut last = self.at_beta(rho, b1, guess)?;
        for _ in 0..60 {
            let g1 = self.plane.offset(&last.1);
            if g1 == g0 || g1.to_f64() == 0.0 {
                break;
            }
            let step = g1 * (b1 - b0) / (g1 - g0);
            b0 = b1;
            g0 = g1;
            b1 -= step;
            last = self.at_beta(rho, b1, last.0)?;
            if step.abs().to_f64() < 1e-29 {
                break;
            }
        }
        let (x, y, phase) = last;
        let psi = (b1 - phase - phi_j).wrap_pi();
        Ok(SheetPoint { s, x, landing: y.with_hint(self.j), planar: self.plane.planar(&y), rho, phase, psi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralSample {
    pub s: f64,
    pub point: [f64; 2],
    pub r: f64,
    /// Unwrapped polar angle.
    pub phi: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sheet: Option<SheetPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralSamples {
    pub samples: Vec<SpiralSample>,
}

impl SpiralSamples {
    /// Builds samples from planar points, lifting the polar angle continuously.
    pub fn from_points(params: &[f64], points: &[[f64; 2]]) -> Self {
        let mut samples = Vec::with_capacity(points.len());
        let mut prev: Option<f64> = None;
        for (&s, &p) in params.iter().zip(points) {
            let raw = p[1].atan2(p[0]);
            let phi = match prev {
                None => raw,
                Some(q) => q + crate::geometry::wrap_angle(raw - q),
            };
            prev = Some(phi);
            samples.push(SpiralSample { s, point: p, r: p[0].hypot(p[1]), phi, sheet: None });
        }
        SpiralSamples { samples }
    }

    pub fn params(&self) -> Vec<f64> {
        self.samples.iter().map(|p| p.s).collect()
    }

    pub fn polar(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|p| [p.r, p.phi]).collect()
    }

    /// Number of full turns of the polar angle covered by the samples.
    pub fn turns_resolved(&self) -> usize {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => ((b.phi - a.phi).abs() / std::f64::consts::TAU).floor() as usize,
            _ => 0,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "x", "y", "r", "phi_unwrapped"])?;
        for p in &self.samples {
            wr.serialize((p.s, p.point[0], p.point[1], p.r, p.phi))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Samples of the planar spiral cut from `Π(D_i)` near `q_j`, for `s ∈ [s_min, s_max]`.
///
/// Parameters whose passage does not land in `V_j` through `C_j^out` are skipped.
pub fn image_spiral_range(seed: &SeedRay, j: usize, s_range: [f64; 2], samples_per_turn: usize, mp: &ModelParams) -> Result<SpiralSamples> {
    let plane = SlicePlane::at(j, mp)?;
    let sheet = Sheet { seed: *seed, j, plane, mp };
    let ds = std::f64::consts::TAU / (mp.twist() * samples_per_turn.max(8) as f64);
    let n = ((s_range[1] - s_range[0]) / ds).ceil().max(1.0) as usize;
    let mut sheets = Vec::new();
    let mut guess = None;
    for k in 0..=n {
        let s = Dd::from_f64(s_range[0]) + Dd::from_f64(ds) * Dd::from_f64(k as f64);
        if s.to_f64() > s_range[1] + 0.5 * ds {
            break;
        }
        let p = sheet.point(s, guess)?;
        guess = Some(p.x);
        if p.valid(seed.branch, j, mp) {
            sheets.push(p);
        }
    }
    if sheets.is_empty() {
        return Err(Error::NoVisits);
    }
    // orientation of the planar rotation relative to the swept phase
    let first = &sheets[0];
    let h = Dd::from_f64(0.01 / mp.twist());
    let next = sheet.point(first.s + h, Some(first.x))?;
    let turn = |p: &SheetPoint| p.planar[1].to_f64().atan2(p.planar[0].to_f64());
    let sign = crate::geometry::wrap_angle(turn(&next) - turn(first)).signum();
    let mut samples = Vec::with_capacity(sheets.len());
    let mut prev: Option<(f64, f64)> = None;
    for p in sheets {
        let raw = turn(&p);
        let phase = p.phase.to_f64();
        let phi = match prev {
            None => raw,
            Some((phi0, phase0)) => {
                let predicted = phi0 + sign * (phase - phase0);
                raw + std::f64::consts::TAU * ((predicted - raw) / std::f64::consts::TAU).round()
            }
        };
        prev = Some((phi, phase));
        let point = [p.planar[0].to_f64(), p.planar[1].to_f64()];
        samples.push(SpiralSample { s: p.s.to_f64(), point, r: point[0].hypot(point[1]), phi, sheet: Some(p) });
    }
    Ok(SpiralSamples { samples })
}

/// `image_spiral_range` on `[0, s_max]`.
pub fn image_spiral(seed: &SeedRay, j: usize, s_max: f64, mp: &ModelParams) -> Result<SpiralSamples> {
    image_spiral_range(seed, j, [0.0, s_max], 64, mp)
}

/// Largest `s` whose entry radius stays above the resolution floor.
pub fn resolvable_s_max(seed: &SeedRay, mp: &ModelParams) -> Result<f64> {
    let z = global_map_s_on(&SigmaPoint::on_fix(Dd::from_f64(seed.origin[0]), Dd::from_f64(seed.origin[1])), seed.branch, mp)?;
    let rho_at = |s: f64| -> Result<f64> {
        let p = seed.point(Dd::from_f64(s));
        let e = global_map_s_on(&SigmaPoint::on_fix(p[0], p[1]), seed.branch, mp)?;
        Ok(e.r_u().to_f64())
    };
    let floor = resolution_floor(mp);
    // the entry radius is affine in the seed offset when the origin is on W^s
    let r0 = rho_at(0.0)?;
    if z.r_u().to_f64() > floor {
        return Err(Error::InvalidRequest("seed ray does not accumulate on the stable trace".into()));
    }
    Ok((r0 / floor).ln())
}

pub fn resolution_floor(mp: &ModelParams) -> f64 {
    (1e2 * f64::EPSILON * mp.section_radius).max(10.0 * STABLE_HIT_FRACTION * mp.section_radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOne {
    pub passed: bool,
    /// Per-turn maxima and minima of `r`.
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwo {
    pub passed: bool,
    /// Tail `[s_start, s_end]` on which `φ` is monotone.
    pub interval: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionThree {
    pub passed: bool,
    pub max_abs_phi: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralReport {
    pub condition1: ConditionOne,
    pub condition2: ConditionTwo,
    pub condition3: ConditionThree,
    pub turns_resolved: usize,
}

impl SpiralReport {
    pub fn is_spiral(&self) -> bool {
        self.condition1.passed && self.condition2.passed && self.condition3.passed
    }
}

pub fn classify_spiral(sp: &SpiralSamples) -> Result<SpiralReport> {
    classify_spiral_with(sp, 6.0 * std::f64::consts::PI)
}

/// Checks the three spiral conditions: `r` between two decreasing envelopes
/// tending to zero, `φ` monotone on a tail, and `|φ|` growing past `threshold`.
pub fn classify_spiral_with(sp: &SpiralSamples, threshold: f64) -> Result<SpiralReport> {
    let tau = std::f64::consts::TAU;
    let s = &sp.samples;
    if s.len() < 24 {
        return Err(Error::InsufficientResolution(format!("{} samples, at least 24 needed", s.len())));
    }
    if let Some(w) = s.windows(2).find(|w| (w[1].phi - w[0].phi).abs() > tau / 8.0) {
        return Err(Error::InsufficientResolution(format!("angle step {:.3} at s = {}", w[1].phi - w[0].phi, w[0].s)));
    }
    let turns = sp.turns_resolved();
    let buckets = turns.max(1);
    let phi0 = s[0].phi;

    let mut upper = vec![f64::NEG_INFINITY; buckets];
    let mut lower = vec![f64::INFINITY; buckets];
    for p in s {
        let k = ((p.phi - phi0).abs() / tau).floor() as usize;
        if k < buckets {
            upper[k] = upper[k].max(p.r);
            lower[k] = lower[k].min(p.r);
        }
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let shrinking = upper.last().zip(upper.first()).is_some_and(|(l, f)| *l < 0.5 * f);
    let condition1 = ConditionOne { passed: decreasing(&upper) && decreasing(&lower) && shrinking, upper, lower };

    let sign = |k: usize| (s[k + 1].phi - s[k].phi).signum();
    let last_sign = sign(s.len() - 2);
    let mut start = s.len() - 1;
    while start > 0 && sign(start - 1) == last_sign && last_sign != 0.0 {
        start -= 1;
    }
    let tail_turns = (s[s.len() - 1].phi - s[start].phi).abs() / tau;
    let condition2 = ConditionTwo { passed: last_sign != 0.0 && tail_turns >= 2.0, interval: [s[start].s, s[s.len() - 1].s] };

    let max_abs_phi = s.iter().map(|p| (p.phi - phi0).abs()).fold(0.0, f64::max);
    let end_abs = (s[s.len() - 1].phi - phi0).abs();
    let condition3 = ConditionThree { passed: end_abs > threshold && condition2.passed, max_abs_phi, threshold };
    Ok(SpiralReport { condition1, condition2, condition3, turns_resolved: turns })
}

/// Crossing of the spiral with `W^s_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub location: SigmaPoint<Dd>,
    /// Fix-plane point whose image is `location`.
    pub preimage: [Dd; 2],
    #[serde(rename = "m")]
    pub turn_index: i64,
    pub pair_slot: PairSlot,
    pub s_value: f64,
    /// Coordinates of `location` in the slice plane through `q_j`.
    pub planar: [f64; 2],
    /// Distance of `location` to `W^s_j`.
    pub residual: f64,
    /// Sine of the angle between the spiral and `W^s_j`.
    pub transversality: f64,
}

fn refine_crossing(sheet: &Sheet, a: &SheetPoint, b: &SheetPoint) -> Result<SheetPoint> {
    let (mut s0, mut s1) = (a.s, b.s);
    let (mut y0, mut y1) = (a.planar[1], b.planar[1]);
    let mut best = if y0.abs() < y1.abs() { *a } else { *b };
    for _ in 0..80 {
        if y1 == y0 {
            break;
        }
        let mut s2 = s1 - y1 * (s1 - s0) / (y1 - y0);
        // keep the iterate inside the bracket
        let (lo, hi) = if a.s < b.s { (a.s, b.s) } else { (b.s, a.s) };
        if s2 < lo || s2 > hi {
            s2 = (s0 + s1) * Dd::from_f64(0.5);
        }
        let p = sheet.point(s2, Some(best.x))?;
        if p.planar[1].abs() < best.planar[1].abs() {
            best = p;
        }
        let step = (s2 - s1).abs().to_f64();
        s0 = s1;
        y0 = y1;
        s1 = s2;
        y1 = p.planar[1];
        if step < 1e-28 || y1.to_f64() == 0.0 {
            break;
        }
    }
    if (best.s - a.s).abs().to_f64().max((best.s - b.s).abs().to_f64()) > (a.s - b.s).abs().to_f64() * 1.000001 {
        return Err(Error::RootNotConverged("crossing left its bracket".into()));
    }
    Ok(best)
}

/// Both crossings of the spiral from the default seed ray in `D_i` with
/// `W^s_j` on every turn `m ∈ [m_lo, m_hi]`.
pub fn find_spiral_line_intersections(i: usize, j: usize, turns: [i64; 2], mp: &ModelParams) -> Result<Vec<IntersectionPoint>> {
    find_spiral_line_intersections_from(&SeedRay::default_for(i, mp)?, j, turns, mp)
}

pub fn find_spiral_line_intersections_from(seed: &SeedRay, j: usize, turns: [i64; 2], mp: &ModelParams) -> Result<Vec<IntersectionPoint>> {
    let [m_lo, m_hi] = turns;
    if m_lo > m_hi || m_lo < 0 {
        return Err(Error::InvalidRequest(format!("turn range [{m_lo}, {m_hi}]")));
    }
    let plane = SlicePlane::at(j, mp)?;
    let sheet = Sheet { seed: *seed, j, plane, mp };
    let start = sheet.point(Dd::zero(), None)?;
    let twist = mp.twist();
    let tau = std::f64::consts::TAU;
    let s_cap = resolvable_s_max(seed, mp)?;
    // phase grows like twist·s along the seed
    let s_of_phase = |phase: f64| (phase - start.phase.to_f64()) / twist;
    let per_turn: Vec<Result<Vec<IntersectionPoint>>> = (m_lo..=m_hi)
        .into_par_iter()
        .map(|m| {
            let s_lo = s_of_phase(tau * m as f64) - 0.05;
            let s_hi = s_of_phase(tau * (m + 1) as f64) + 0.05;
            if s_lo < 0.0 {
                return Err(Error::TurnUnresolvable { turn: m, reason: "seed starts inside this turn".into() });
            }
            if s_hi > s_cap {
                return Err(Error::TurnUnresolvable { turn: m, reason: "entry radius below the resolution floor".into() });
            }
            let ds = tau / (twist * 64.0);
            let n = ((s_hi - s_lo) / ds).ceil() as usize;
            let mut pts: Vec<SheetPoint> = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let s = Dd::from_f64(s_lo) + Dd::from_f64(ds) * Dd::from_f64(k as f64);
                let p = sheet.point(s, pts.last().map(|p| p.x))?;
                if !p.valid(seed.branch, j, mp) && p.turn() == m {
                    return Err(Error::TurnUnresolvable { turn: m, reason: "sheet leaves V_j during this turn".into() });
                }
                pts.push(p);
            }
            let mut out = Vec::new();
            for w in pts.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if (a.planar[1].to_f64() > 0.0) == (b.planar[1].to_f64() > 0.0) {
                    continue;
                }
                let p = refine_crossing(&sheet, a, b)?;
                if p.turn() != m {
                    continue;
                }
                let d = [(b.planar[0] - a.planar[0]).to_f64(), (b.planar[1] - a.planar[1]).to_f64()];
                out.push(IntersectionPoint {
                    location: p.landing,
                    preimage: p.x,
                    turn_index: m,
                    pair_slot: p.slot(),
                    s_value: p.s.to_f64(),
                    planar: [p.planar[0].to_f64(), p.planar[1].to_f64()],
                    residual: distance_to_stable(&p.landing, j, mp)?.to_f64(),
                    transversality: d[1].abs() / d[0].hypot(d[1]),
                });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_turn {
        all.extend(r?);
    }
    Ok(all)
}

pub fn write_intersections_json<W: Write>(points: &[IntersectionPoint], w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        m: i64,
        pair_slot: PairSlot,
        coordinates: [f64; 3],
        planar: [f64; 2],
        preimage: [f64; 2],
        s: f64,
        residual: f64,
    }
    let rows: Vec<Row> = points
        .iter()
        .map(|p| Row {
            m: p.turn_index,
            pair_slot: p.pair_slot,
            coordinates: p.location.to_f64().coords(),
            planar: p.planar,
            preimage: [p.preimage[0].to_f64(), p.preimage[1].to_f64()],
            s: p.s_value,
            residual: p.residual,
        })
        .collect();
    serde_json::to_writer_pretty(w, &rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_plane_contains_stable_tangent() {
        let mp = ModelParams::default_for(2);
        let p = SlicePlane::at(1, &mp).unwrap();
        let ts = mp.branches[0].stable_tangent();
        assert!(linalg::dot(&p.normal, &ts).abs() < 1e-15);
        assert!(linalg::dot(&p.normal, &mp.branches[0].unstable_tangent()).abs() > 0.1);
    }

    #[test]
    fn circle_fails_condition_one() {
        let n = 400;
        let params: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let pts: Vec<[f64; 2]> = params.iter().map(|s| [s.cos(), s.sin()]).collect();
        let rep = classify_spiral(&SpiralSamples::from_points(&params, &pts)).unwrap();
        assert!(!rep.condition1.passed);
        assert!(rep.condition2.passed);
    }

    #[test]
    fn ray_has_bounded_angle() {
        let params: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let pts: Vec<[f64; 2]> = params.iter().map(|s| [(-s).exp(), 0.0]).collect();
        let rep = classify_spiral(&SpiralSamples::from_points(&params, &pts)).unwrap();
        assert!(!rep.condition3.passed);
        assert!(!rep.is_spiral());
    }

    #[test]
    fn sparse_samples_rejected() {
        let params: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let pts: Vec<[f64; 2]> = params.iter().map(|s| [s.cos(), s.sin()]).collect();
        assert!(matches!(classify_spiral(&SpiralSamples::from_points(&params, &pts)), Err(Error::InsufficientResolution(_))));
    }

    #[test]
    fn log_spiral_passes() {
        let params: Vec<f64> = (0..600).map(|k| k as f64 * 0.05).collect();
        let pts: Vec<[f64; 2]> = params.iter().map(|s| [(-0.3 * s).exp() * s.cos(), (-0.3 * s).exp() * s.sin()]).collect();
        assert!(classify_spiral(&SpiralSamples::from_points(&params, &pts)).unwrap().is_spiral());
    }
}
