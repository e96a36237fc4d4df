//! Itineraries, the coding map and switching sweeps.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SigmaPoint;
use crate::global::{branch_of, return_map, Passage};
use crate::orbit::{approximate_switching_point, find_reversible_periodic, homoclinic_for_word, symbols_along};
use crate::params::ModelParams;
use crate::real::{Dd, Real};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Itinerary {
    pub symbols: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windings: Option<Vec<i64>>,
}

impl Itinerary {
    pub fn new(symbols: Vec<usize>, windings: Option<Vec<i64>>, n_branches: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidRequest("empty itinerary".into()));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s == 0 || s > n_branches) {
            return Err(Error::InvalidRequest(format!("symbol {s} outside 1..={n_branches}")));
        }
        if let Some(w) = &windings {
            if w.len() + 1 != symbols.len() {
                return Err(Error::InvalidRequest(format!("{} windings for {} symbols", w.len(), symbols.len())));
            }
        }
        Ok(Itinerary { symbols, windings })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Drops the first symbol (and the first winding).
    pub fn shift(&self) -> Itinerary {
        Itinerary {
            symbols: self.symbols[1.min(self.symbols.len())..].to_vec(),
            windings: self.windings.as_ref().map(|w| w[1.min(w.len())..].to_vec()),
        }
    }
}

impl std::fmt::Display for Itinerary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&word_string(&self.symbols))
    }
}

pub fn word_string(w: &[usize]) -> String {
    w.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    StableManifoldHit,
    EscapedTube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingResult {
    pub point: SigmaPoint<Dd>,
    pub realized: Itinerary,
    pub terminated_by: Termination,
}

/// First `k` symbols of the forward orbit of `x`.
pub fn coding_map(x: &SigmaPoint<Dd>, k: usize, mp: &ModelParams) -> CodingResult {
    let mut symbols = Vec::with_capacity(k);
    let mut windings = Vec::new();
    let mut terminated_by = Termination::Completed;
    match branch_of(x, mp) {
        Some(s) => symbols.push(s),
        None => terminated_by = Termination::EscapedTube,
    }
    let mut cur = *x;
    while terminated_by == Termination::Completed && symbols.len() < k {
        match return_map(&cur, mp) {
            Ok(Passage::Landed(r)) => {
                symbols.push(r.symbol);
                windings.push(r.windings);
                cur = r.point;
            }
            Err(Error::StableManifoldHit { .. }) => terminated_by = Termination::StableManifoldHit,
            _ => terminated_by = Termination::EscapedTube,
        }
    }
    let windings = (!symbols.is_empty()).then_some(windings);
    CodingResult { point: *x, realized: Itinerary { symbols, windings }, terminated_by }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyViolation {
    pub index: usize,
    pub coded: Vec<usize>,
    pub shifted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyReport {
    pub k: usize,
    pub checked: usize,
    pub violations: Vec<SemiconjugacyViolation>,
    /// Points left out, with the reason.
    pub excluded: Vec<(usize, String)>,
}

/// Checks `π(Π(x)) = σ(π(x))` on the first `k` symbols.
pub fn verify_semiconjugacy(points: &[SigmaPoint<Dd>], k: usize, mp: &ModelParams) -> SemiconjugacyReport {
    let mut rep = SemiconjugacyReport { k, checked: 0, violations: Vec::new(), excluded: Vec::new() };
    for (index, x) in points.iter().enumerate() {
        let c = coding_map(x, k, mp);
        if c.terminated_by != Termination::Completed {
            rep.excluded.push((index, format!("coding stopped after {} symbols: {:?}", c.realized.len(), c.terminated_by)));
            continue;
        }
        let image = match return_map(x, mp) {
            Ok(Passage::Landed(r)) => r.point,
            _ => {
                rep.excluded.push((index, "first return did not land".into()));
                continue;
            }
        };
        let s = coding_map(&image, k - 1, mp);
        if s.terminated_by != Termination::Completed {
            rep.excluded.push((index, format!("coding of the image stopped: {:?}", s.terminated_by)));
            continue;
        }
        rep.checked += 1;
        if s.realized.symbols != c.realized.symbols[1..] {
            rep.violations.push(SemiconjugacyViolation { index, coded: c.realized.symbols, shifted: s.realized.symbols });
        }
    }
    rep
}

/// Largest of `radii` such that every sampled point of the ball shares the first `m` symbols of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub m: usize,
    pub radii: Vec<f64>,
    /// Points per radius that kept the prefix.
    pub agreeing: Vec<usize>,
    pub samples: usize,
    pub delta: Option<f64>,
}

pub fn continuity_radius(x: &SigmaPoint<Dd>, m: usize, radii: &[f64], samples: usize, seed: u64, mp: &ModelParams) -> ContinuityReport {
    let reference = coding_map(x, m, mp).realized.symbols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreeing = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut ok = 0;
        for _ in 0..samples {
            let d = loop {
                let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n <= 1.0 && n > 0.0 {
                    break v;
                }
            };
            let z = SigmaPoint::new(x.a + Dd::from_f64(r * d[0]), x.b + Dd::from_f64(r * d[1]), x.c + Dd::from_f64(r * d[2]));
            if coding_map(&z, m, mp).realized.symbols == reference {
                ok += 1;
            }
        }
        agreeing.push(ok);
    }
    let delta = radii
        .iter()
        .zip(&agreeing)
        .filter(|(_, &a)| a == samples)
        .map(|(&r, _)| r)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    ContinuityReport { m, radii: radii.to_vec(), agreeing, samples, delta }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Switching,
    Homoclinic,
    Periodic,
}

impl SweepMode {
    pub const ALL: [SweepMode; 3] = [SweepMode::Switching, SweepMode::Homoclinic, SweepMode::Periodic];
}

impl std::fmt::Display for SweepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepMode::Switching => "switching",
            SweepMode::Homoclinic => "homoclinic",
            SweepMode::Periodic => "periodic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub word: Vec<usize>,
    pub mode: SweepMode,
    pub realized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<SigmaPoint<Dd>>,
    /// Chain anchor residual, or closure error for periodic points.
    pub residual: Option<f64>,
    pub forward_symbols: Vec<usize>,
    pub backward_symbols: Vec<usize>,
    /// Diameter of the deepest chain region containing the point.
    pub diameter: Option<f64>,
    /// Distance to a periodic point in the same region: the periodic point of
    /// the sweep for homoclinic rows, one following the whole chain word for
    /// switching rows.
    pub partner_distance: Option<f64>,
    /// Closure error of that periodic point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_closure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n: usize,
    pub max_len: usize,
    pub winding: i64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.realized)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.realized)
    }

    pub fn rows_for(&self, mode: SweepMode) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["word", "mode", "realized", "residual", "a", "b", "c", "diameter", "partner_distance"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            let p = r.point.map(|p| p.to_f64());
            wr.write_record([
                word_string(&r.word),
                r.mode.to_string(),
                r.realized.to_string(),
                opt(r.residual),
                opt(p.map(|p| p.a)),
                opt(p.map(|p| p.b)),
                opt(p.map(|p| p.c)),
                opt(r.diameter),
                opt(r.partner_distance),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// All words over `{1, …, n}` of length `1..=max_len`, shortest first, then lexicographic.
pub fn all_words(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        level = level.iter().flat_map(|w| (1..=n).map(move |s| [w.as_slice(), &[s]].concat())).collect();
        out.extend(level.iter().cloned());
    }
    out
}

fn failed(word: &[usize], mode: SweepMode, e: impl std::fmt::Display) -> SweepRow {
    SweepRow {
        word: word.to_vec(),
        mode,
        realized: false,
        point: None,
        residual: None,
        forward_symbols: Vec::new(),
        backward_symbols: Vec::new(),
        diameter: None,
        partner_distance: None,
        partner_closure: None,
        error: Some(e.to_string()),
    }
}

/// Realizes `word` as a switching point, a homoclinic point and a periodic point.
///
/// The periodic point has `word` as its prefix; a word of length one is
/// extended to `(i, i)`.
pub fn realize_word(word: &[usize], winding: i64, mp: &ModelParams) -> [SweepRow; 3] {
    let k = word.len();
    let windings = vec![winding; k - 1];
    let prefix = if k == 1 { vec![word[0]; 2] } else { word.to_vec() };

    let periodic = find_reversible_periodic(&prefix, &vec![winding; prefix.len() - 1], mp);
    let partner = periodic.as_ref().ok().map(|p| (p.point, p.closure_error));

    let switching = match approximate_switching_point(word, &windings, mp) {
        Ok(sw) => {
            let near = find_reversible_periodic(&sw.chain.itinerary, &sw.chain.windings, mp).ok();
            SweepRow {
                word: word.to_vec(),
                mode: SweepMode::Switching,
                realized: sw.shadows(),
                point: Some(sw.point),
                residual: Some(sw.chain.last().residual),
                diameter: Some(sw.chain.last().diameter),
                partner_distance: near.as_ref().map(|p| p.point.distance(&sw.point).to_f64()),
                partner_closure: near.map(|p| p.closure_error),
                forward_symbols: sw.forward_symbols,
                backward_symbols: sw.backward_symbols,
                error: None,
            }
        }
        Err(e) => failed(word, SweepMode::Switching, e),
    };

    let homoclinic = match homoclinic_for_word(word, &windings, mp) {
        Ok((h, chain)) => {
            let realized = h.check(mp).map(|c| c.is_homoclinic(k)).unwrap_or(false);
            SweepRow {
                word: word.to_vec(),
                mode: SweepMode::Homoclinic,
                realized,
                point: Some(h.point),
                residual: Some(h.residual),
                forward_symbols: symbols_along(&h.point, k, false, mp),
                backward_symbols: symbols_along(&h.point, k, true, mp),
                diameter: Some(chain.last().diameter),
                partner_distance: partner.map(|(p, _)| p.distance(&h.point).to_f64()),
                partner_closure: partner.map(|(_, c)| c),
                error: None,
            }
        }
        Err(e) => failed(word, SweepMode::Homoclinic, e),
    };

    let periodic = match periodic {
        Ok(p) => SweepRow {
            word: word.to_vec(),
            mode: SweepMode::Periodic,
            realized: p.closure_error <= 1e-8 && p.word[..k] == *word,
            point: Some(p.point),
            residual: Some(p.closure_error),
            forward_symbols: symbols_along(&p.point, k, false, mp),
            backward_symbols: symbols_along(&p.point, k, true, mp),
            diameter: None,
            partner_distance: Some(0.0),
            partner_closure: Some(p.closure_error),
            error: None,
        },
        Err(e) => failed(word, SweepMode::Periodic, e),
    };
    [switching, homoclinic, periodic]
}

/// Every word of length `≤ max_len` over the first `n` symbols, in all three modes.
pub fn verify_switching_sweep(n: usize, max_len: usize, winding: i64, mp: &ModelParams) -> Result<SweepReport> {
    if n == 0 || n > mp.n_branches {
        return Err(Error::InvalidRequest(format!("{n} symbols requested with {} branches", mp.n_branches)));
    }
    if max_len == 0 {
        return Err(Error::InvalidRequest("max_len must be positive".into()));
    }
    let words = all_words(n, max_len);
    let rows: Vec<[SweepRow; 3]> = words.par_iter().map(|w| realize_word(w, winding, mp)).collect();
    Ok(SweepReport { n, max_len, winding, rows: rows.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBound {
    pub n: usize,
    pub k: usize,
    /// Distinct `k`-words with a re-verified witness.
    pub witnessed: usize,
    pub total: usize,
    /// `ln(witnessed) / k`.
    pub value: f64,
    pub incomplete: bool,
    pub missing: Vec<Vec<usize>>,
}

/// Counts the `k`-words of the sweep whose switching point still codes to the word.
pub fn entropy_lower_bound(sweep: &SweepReport, k: usize, mp: &ModelParams) -> Result<EntropyBound> {
    if k == 0 || k > sweep.max_len {
        return Err(Error::InvalidRequest(format!("k = {k} outside the sweep's 1..={}", sweep.max_len)));
    }
    let mut missing = Vec::new();
    let mut witnessed = 0;
    for w in all_words(sweep.n, k).into_iter().filter(|w| w.len() == k) {
        let row = sweep.rows_for(SweepMode::Switching).find(|r| r.word == w);
        let ok = row.and_then(|r| r.point.filter(|_| r.realized)).is_some_and(|x| {
            let c = coding_map(&x, k, mp);
            c.terminated_by == Termination::Completed && c.realized.symbols == w
        });
        if ok {
            witnessed += 1;
        } else {
            missing.push(w);
        }
    }
    let total = sweep.n.pow(k as u32);
    let value = if witnessed == 0 { 0.0 } else { (witnessed as f64).ln() / k as f64 };
    Ok(EntropyBound { n: sweep.n, k, witnessed, total, value, incomplete: !missing.is_empty(), missing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counts() {
        assert_eq!(all_words(2, 5).len(), 62);
        assert_eq!(all_words(2, 4).len(), 30);
        assert_eq!(all_words(3, 3).len(), 39);
        assert_eq!(all_words(2, 2), vec![vec![1], vec![2], vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn itinerary_checks() {
        assert!(Itinerary::new(vec![1, 3], None, 2).is_err());
        assert!(Itinerary::new(vec![1, 2], Some(vec![1, 2]), 2).is_err());
        let it = Itinerary::new(vec![1, 2, 1], Some(vec![2, 3]), 2).unwrap();
        assert_eq!(it.shift(), Itinerary { symbols: vec![2, 1], windings: Some(vec![3]) });
    }

    #[test]
    fn base_point_codes_to_stable_hit() {
        let mp = ModelParams::default_for(2);
        let q = SigmaPoint::on_fix(Dd::from_f64(0.5), Dd::zero());
        let c = coding_map(&q, 4, &mp);
        assert_eq!(c.terminated_by, Termination::StableManifoldHit);
        assert_eq!(c.realized.symbols, vec![1]);
    }
}
