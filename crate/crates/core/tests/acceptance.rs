//! Acceptance criteria for the primary component. Prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use bifocus::search::chain::AreaRatio;
use bifocus::spiral::{classify_spiral, find_spiral_line_intersections, image_spiral, SeedRay};
use bifocus::symbolic::{all_words, SweepMode, SweepReport};
use bifocus::{
    approximate_switching_point, entropy_lower_bound, find_reversible_periodic, find_secondary_homoclinics, flight_time, local_map,
    local_map_inverse, refine_nested_disk, return_map, verify_superhomoclinic, verify_switching_sweep, Dd, InPoint, ModelParams, OutPoint,
    Passage, Real, SigmaPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(n: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let pass = out.pass && el <= limit;
    println!(
        "criterion {n} {}  {name}: {}; {:.2} s (limit {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        el.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn reversibility() -> Outcome {
    let mp = ModelParams::default_for(2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut defined, mut tried, mut worst) = (0usize, 0usize, 0.0f64);
    while defined < 10_000 && tried < 2_000_000 {
        tried += 1;
        let i = rng.random_range(0..2);
        let q = mp.branches[i].q();
        let d: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if d.iter().map(|x| x * x).sum::<f64>() >= 1.0 {
            continue;
        }
        let y = SigmaPoint::new(q[0] + mp.v_radius * d[0], q[1] + mp.v_radius * d[1], q[2] + mp.v_radius * d[2]);
        // most draws fall into the stable manifold's shadow; screen them cheaply
        if !matches!(return_map(&y, &mp), Ok(Passage::Landed(_))) {
            continue;
        }
        let y = y.lift::<Dd>();
        let Ok(Passage::Landed(r)) = return_map(&y, &mp) else { continue };
        let Ok(Passage::Landed(back)) = return_map(&r.point.reflect(), &mp) else {
            worst = f64::INFINITY;
            continue;
        };
        defined += 1;
        worst = worst.max(back.point.reflect().distance(&y).to_f64());
    }
    let mut conj = 0.0f64;
    for _ in 0..10_000 {
        let rho: f64 = rng.random_range(1e-6..1.0);
        let (a, b): (f64, f64) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
        let o = OutPoint::new(rho * a.cos(), rho * a.sin(), b);
        let direct = local_map_inverse(&o, &mp).unwrap().to_point4(1.0);
        let via = local_map(&o.reflect(), &mp).unwrap().reflect().to_point4(1.0);
        conj = conj.max(direct.distance(&via));
    }
    Outcome {
        pass: defined == 10_000 && worst <= 1e-9 && conj <= 1e-10,
        detail: format!(
            "{defined} points (of {tried} drawn in V), max |RΠRΠ(y) - y| = {worst:.1e} (tol 1e-9), max |Π_O^-1 - RΠ_O R| = {conj:.1e} (tol 1e-10)"
        ),
    }
}

fn local_oracle() -> Outcome {
    let mp = ModelParams::default_for(2);
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let phi_s = std::f64::consts::TAU * (i as f64 + 0.5) / 10.0;
                let rho = 10f64.powf(-3.0 + 3.0 * j as f64 / 10.0) * 0.999;
                let phi_u = std::f64::consts::TAU * (k as f64 + 0.25) / 10.0;
                let p = InPoint::new(phi_s, rho * phi_u.cos(), rho * phi_u.sin());
                let closed = local_map(&p, &mp).unwrap().to_point4(mp.section_radius);
                let t = flight_time(rho, &mp).unwrap();
                let num = common::flow(&p.to_point4(mp.section_radius), t, &mp);
                worst = worst.max(common::rel_err(&closed, &num));
                count += 1;
            }
        }
    }
    Outcome { pass: worst <= 1e-8, detail: format!("{count} grid points, max relative error vs RK4 = {worst:.1e} (tol 1e-8)") }
}

fn spiral() -> Outcome {
    let mp = ModelParams::default_for(2);
    let (i, j) = (1, 2);
    let seed = SeedRay::default_for(i, &mp).unwrap();
    let samples = image_spiral(&seed, j, 7.0, &mp).unwrap();
    let rep = classify_spiral(&samples).unwrap();
    let turns = rep.turns_resolved as i64;
    let pts = find_spiral_line_intersections(i, j, [1, turns], &mp).unwrap();
    let per_turn: Vec<usize> = (1..=turns).map(|m| pts.iter().filter(|p| p.turn_index == m).count()).collect();
    let worst = pts.iter().map(|p| p.residual).fold(0.0, f64::max);
    Outcome {
        pass: rep.is_spiral() && turns >= 5 && per_turn.iter().all(|&c| c == 2) && worst <= 1e-9,
        detail: format!(
            "conditions {}/{}/{}, {turns} turns resolved, crossings per turn {per_turn:?}, max residual {worst:.1e} (tol 1e-9)",
            rep.condition1.passed, rep.condition2.passed, rep.condition3.passed
        ),
    }
}

fn homoclinics() -> Outcome {
    let mp = ModelParams::default_for(2);
    let pts = find_secondary_homoclinics(1, 2, [1, 4], &mp).unwrap();
    let mut distinct = 0;
    for (k, p) in pts.iter().enumerate() {
        if pts[..k].iter().all(|o| o.point.distance(&p.point).to_f64() > 1e-12) {
            distinct += 1;
        }
    }
    let verified = pts
        .iter()
        .filter(|p| p.point.c == Dd::zero() && p.residual <= 1e-9 && p.check(&mp).is_ok_and(|c| c.is_homoclinic(p.itinerary.len())))
        .count();
    Outcome {
        pass: distinct >= 8 && verified == pts.len(),
        detail: format!("{distinct} distinct points for m in [1,4], {verified} on Fix(R) with W^s hit forward and W^u hit backward"),
    }
}

fn sweep_summary(s: &SweepReport) -> (usize, usize, usize) {
    let words = s.rows.len() / 3;
    let realized = (0..words).filter(|k| s.rows[3 * k..3 * k + 3].iter().all(|r| r.realized)).count();
    let asym = s.rows.iter().filter(|r| r.mode != SweepMode::Periodic && r.realized && r.forward_symbols != r.backward_symbols).count();
    (words, realized, asym)
}

fn sweeps(out: &mut Vec<SweepReport>) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (n, len) in [(2, 5), (3, 3)] {
        let mp = ModelParams::default_for(n);
        let s = verify_switching_sweep(n, len, 2, &mp).unwrap();
        let (words, realized, asym) = sweep_summary(&s);
        let expected = all_words(n, len).len();
        pass &= words == expected && realized == expected && asym == 0;
        detail.push(format!("N={n} len<={len}: {realized}/{expected} words in all three modes, {asym} asymmetric"));
        out.push(s);
    }
    Outcome { pass, detail: detail.join("; ") }
}

fn periodic(sweeps: &[SweepReport]) -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut failures = 0;
    let mut partner_ok = 0;
    let mut homoclinic = 0;
    for s in sweeps {
        let mp = ModelParams::default_for(s.n);
        for h in s.rows_for(SweepMode::Homoclinic) {
            let prefix = if h.word.len() == 1 { vec![h.word[0]; 2] } else { h.word.clone() };
            match find_reversible_periodic(&prefix, &vec![s.winding; prefix.len() - 1], &mp) {
                Ok(p) => {
                    count += 1;
                    worst = worst.max(p.closure_error);
                    homoclinic += 1;
                    if let (Some(x), Some(d)) = (h.point, h.diameter) {
                        if p.point.distance(&x).to_f64() <= d {
                            partner_ok += 1;
                        }
                    }
                }
                Err(_) => failures += 1,
            }
        }
        // periodic points following the full chain word of each switching point
        for r in s.rows_for(SweepMode::Switching) {
            match r.partner_closure {
                Some(c) => {
                    count += 1;
                    worst = worst.max(c);
                }
                None => failures += 1,
            }
        }
    }
    Outcome {
        pass: failures == 0 && worst <= 1e-8 && partner_ok == homoclinic,
        detail: format!(
            "{count} periodic points, {failures} failed, max closure {worst:.1e} (tol 1e-8); {partner_ok}/{homoclinic} homoclinic points with a periodic point inside their box"
        ),
    }
}

fn decay() -> Outcome {
    let mp = ModelParams::default_for(2);
    let windings: Vec<i64> = (1..=7).collect();
    let mut detail = Vec::new();
    let mut pass = true;
    for word in [[1, 2, 1, 2, 1, 2, 1], [1, 1, 1, 1, 1, 1, 1], [2, 1, 1, 2, 2, 1, 2]] {
        match approximate_switching_point(&word, &windings, &mp) {
            Ok(sw) => {
                let rep = verify_superhomoclinic(&sw.point, sw.chain.depth(), &mp);
                let ok = rep.depth == 8 && rep.decays && rep.symmetry_error <= 1e-8;
                pass &= ok;
                detail.push(format!(
                    "{}: d_7 = {:.1e} < d_1 = {:.1e}, symmetry {:.1e}",
                    word.iter().map(|s| s.to_string()).collect::<String>(),
                    rep.forward.last().copied().unwrap_or(f64::NAN),
                    rep.forward.get(1).copied().unwrap_or(f64::NAN),
                    rep.symmetry_error
                ));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{word:?}: {e}"));
            }
        }
    }
    Outcome { pass, detail: format!("depth 8, windings 1..7; {}", detail.join("; ")) }
}

fn entropy(sweeps: &[SweepReport]) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (s, k) in sweeps.iter().zip([5, 3]) {
        let mp = ModelParams::default_for(s.n);
        let b = entropy_lower_bound(s, k, &mp).unwrap();
        let expected = (s.n as f64).ln();
        pass &= b.witnessed == b.total && (b.value - expected).abs() <= 1e-12;
        detail.push(format!(
            "N={} k={k}: {}/{} words witnessed, h >= {:.6} (log {} = {expected:.6})",
            s.n, b.witnessed, b.total, b.value, s.n
        ));
    }
    Outcome { pass, detail: detail.join("; ") }
}

fn contraction() -> Outcome {
    let mut worst: Option<(Vec<usize>, AreaRatio)> = None;
    let (mut chains, mut ratios, mut failures) = (0, 0, 0);
    for (n, len) in [(2, 4), (3, 3)] {
        let mp = ModelParams::default_for(n);
        for w in all_words(n, len).into_iter().filter(|w| w.len() >= 2) {
            match refine_nested_disk(&w, &vec![2; w.len() - 1], &mp) {
                Ok(c) => {
                    chains += 1;
                    for r in c.measured_area_ratios(4000, 17, &mp) {
                        ratios += 1;
                        if worst.as_ref().map_or(true, |(_, b)| r.ratio + 3.0 * r.stderr > b.ratio + 3.0 * b.stderr) {
                            worst = Some((w.clone(), r));
                        }
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    let (w, r) = worst.expect("no chain built");
    let bound = r.ratio + 3.0 * r.stderr;
    Outcome {
        pass: failures == 0 && bound < 1.0,
        detail: format!("{chains} chains ({failures} failed), {ratios} ratios, worst ratio + 3 stderr = {bound:.3} for {w:?}"),
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, "reversibility", secs(5), reversibility);
    ok &= run(2, "local-map oracle", secs(10), local_oracle);
    ok &= run(3, "spiral structure", secs(30), spiral);
    ok &= run(4, "secondary homoclinics", secs(60), homoclinics);
    let mut reports = Vec::new();
    ok &= run(5, "switching sweep", secs(600), || sweeps(&mut reports));
    ok &= run(6, "periodic closure", secs(120), || periodic(&reports));
    ok &= run(7, "super-homoclinic decay", secs(60), decay);
    ok &= run(8, "entropy bound", secs(60), || entropy(&reports));
    ok &= run(9, "nested-disk contraction", secs(120), contraction);
    if !ok {
        std::process::exit(1);
    }
}
