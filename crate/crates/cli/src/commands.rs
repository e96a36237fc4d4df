use std::path::PathBuf;

use bifocus::orbit::{
    approximate_switching_point, find_reversible_periodic, find_secondary_homoclinics, homoclinic_for_word, verify_superhomoclinic,
    write_homoclinic_csv, write_periodic_csv, HomoclinicCheck, PeriodicPoint,
};
use bifocus::search::chain::{refine_nested_disk, AreaRatio, ChainExport};
use bifocus::spiral::{classify_spiral, find_spiral_line_intersections, image_spiral, write_intersections_json, SeedRay};
use bifocus::symbolic::{entropy_lower_bound, verify_switching_sweep, SweepMode, SweepReport};
use bifocus::{trace_orbit, validate_params, Dd, ModelParams, Real, SigmaPoint};
use serde::Serialize;

use crate::output::{CliError, Outputs};
use crate::{Cli, Command, EntropyArgs, OrbitArgs, PairArgs, PeriodicArgs, SpiralArgs, SwitchArgs, WordArgs};

const DEFAULT_WINDING: i64 = 2;

fn command_line() -> String {
    std::iter::once("bifocus".to_string()).chain(std::env::args().skip(1)).collect::<Vec<_>>().join(" ")
}

fn load_params(cli: &Cli) -> Result<ModelParams, CliError> {
    match &cli.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
            ModelParams::from_json_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None if cli.branches == 0 => Err(CliError::Usage("--branches must be positive".into())),
        None => Ok(ModelParams::default_for(cli.branches)),
    }
}

fn validated(cli: &Cli) -> Result<ModelParams, CliError> {
    let mp = load_params(cli)?;
    let report = validate_params(&mp);
    if !report.passed() {
        return Err(CliError::Validation(report));
    }
    Ok(mp)
}

fn windings_or_default(windings: &[i64], passages: usize) -> Result<Vec<i64>, CliError> {
    if windings.is_empty() {
        Ok(vec![DEFAULT_WINDING; passages])
    } else if windings.len() == passages {
        Ok(windings.to_vec())
    } else {
        Err(CliError::Usage(format!("{} windings given for {passages} passages", windings.len())))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let mut out = Outputs::new(&cli.out, command_line())?;
    match &cli.command {
        Command::InitParams => {
            let mp = load_params(cli)?;
            out.write("params.json", "params", |w| {
                use std::io::Write;
                w.write_all((mp.to_json_string()? + "\n").as_bytes())?;
                Ok(())
            })?;
            println!("{}", out.path("params.json").display());
        }
        Command::Validate => {
            let mp = load_params(cli)?;
            let report = validate_params(&mp);
            out.json("validation.json", "validation", &report)?;
            out.finish()?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed() {
                return Err(CliError::Validation(report));
            }
            return Ok(());
        }
        Command::Spiral(a) => spiral(cli, a, &mut out)?,
        Command::Homoclinics(a) => homoclinics(cli, a, &mut out)?,
        Command::Chain(a) => chain(cli, a, &mut out)?,
        Command::Switch(a) => switch(cli, a, &mut out)?,
        Command::Periodic(a) => periodic(cli, a, &mut out)?,
        Command::Entropy(a) => entropy(cli, a, &mut out)?,
        Command::Orbit(a) => orbit(cli, a, &mut out)?,
    }
    out.finish()
}

fn spiral(cli: &Cli, a: &SpiralArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let PairArgs { branch, target, turns } = a.pair;
    let seed = SeedRay::default_for(branch, &mp)?;
    let samples = image_spiral(&seed, target, a.s_max, &mp)?;
    let report = classify_spiral(&samples)?;
    let crossings = find_spiral_line_intersections(branch, target, turns, &mp)?;
    if let Some(bad) = crossings.iter().find(|c| !(c.residual <= cli.tol)) {
        return Err(CliError::Compute(bifocus::Error::RootNotConverged(format!(
            "crossing on turn {} has residual {:e}",
            bad.turn_index, bad.residual
        ))));
    }
    out.write("spiral.csv", "spiral", |w| Ok(samples.write_csv(w)?))?;
    out.json("spiral_report.json", "spiral_report", &report)?;
    out.write("intersections.json", "intersections", |w| Ok(write_intersections_json(&crossings, w)?))?;
    println!(
        "spiral: {} turns resolved, conditions {}/{}/{}, {} crossings for m in {}..{}",
        report.turns_resolved,
        report.condition1.passed,
        report.condition2.passed,
        report.condition3.passed,
        crossings.len(),
        turns[0],
        turns[1]
    );
    Ok(())
}

#[derive(Serialize)]
struct HomoclinicRow<'a> {
    #[serde(flatten)]
    point: &'a bifocus::HomoclinicPoint,
    check: HomoclinicCheck,
}

fn homoclinics(cli: &Cli, a: &PairArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let points = find_secondary_homoclinics(a.branch, a.target, a.turns, &mp)?;
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        if !(p.residual <= cli.tol) {
            return Err(CliError::Compute(bifocus::Error::RootNotConverged(format!("best residual {:e}", p.residual))));
        }
        rows.push(HomoclinicRow { point: p, check: p.check(&mp)? });
    }
    out.write("homoclinics.csv", "homoclinics", |w| Ok(write_homoclinic_csv(&points, w)?))?;
    out.json("homoclinics.json", "homoclinics", &rows)?;
    let verified = rows.iter().filter(|r| r.check.is_homoclinic(2)).count();
    println!("homoclinics: {} points, {} with forward W^s and backward W^u hits", points.len(), verified);
    Ok(())
}

#[derive(Serialize)]
struct ChainFile {
    #[serde(flatten)]
    chain: ChainExport,
    measured_area_ratios: Vec<AreaRatio>,
    seed: u64,
}

fn chain(cli: &Cli, a: &WordArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let windings = windings_or_default(&a.windings, a.word.len().saturating_sub(1))?;
    let chain = refine_nested_disk(&a.word, &windings, &mp)?;
    let measured = chain.measured_area_ratios(a.samples, cli.seed, &mp);
    let file = ChainFile { chain: chain.to_export(&mp)?, measured_area_ratios: measured, seed: cli.seed };
    out.json("chain.json", "chain", &file)?;
    println!("chain: depth {}, anchor residual {:e}, area ratios {:?}", chain.depth(), chain.last().residual, chain.area_ratios());
    Ok(())
}

#[derive(Serialize)]
struct SwitchingFile {
    point: SigmaPoint<Dd>,
    itinerary: Vec<usize>,
    windings: Vec<i64>,
    forward_symbols: Vec<usize>,
    backward_symbols: Vec<usize>,
    shadows: bool,
    diameter: f64,
    chain: ChainExport,
}

fn switch(cli: &Cli, a: &SwitchArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    if !a.word.is_empty() {
        let k = a.word.len();
        let windings = if a.windings.is_empty() { vec![a.winding; k - 1] } else { a.windings.clone() };
        let sw = approximate_switching_point(&a.word, &windings, &mp)?;
        let depth = a.depth.unwrap_or(k + 1);
        let report = verify_superhomoclinic(&sw.point, depth, &mp);
        let file = SwitchingFile {
            point: sw.point,
            itinerary: sw.itinerary.clone(),
            windings: sw.windings.clone(),
            forward_symbols: sw.forward_symbols.clone(),
            backward_symbols: sw.backward_symbols.clone(),
            shadows: sw.shadows(),
            diameter: sw.diameter(),
            chain: sw.chain.to_export(&mp)?,
        };
        out.json("switching.json", "switching", &file)?;
        out.json("convergence.json", "convergence", &report)?;
        println!(
            "switching point ({:.17e}, {:.17e}): forward {:?}, backward {:?}, d_(k-1) < d_1: {}",
            sw.point.a.to_f64(),
            sw.point.b.to_f64(),
            sw.forward_symbols,
            sw.backward_symbols,
            report.decays
        );
        return Ok(());
    }
    let n = a.symbols.unwrap_or(mp.n_branches);
    let sweep = verify_switching_sweep(n, a.word_len, a.winding, &mp)?;
    out.json("sweep.json", "sweep", &sweep)?;
    out.write("sweep.csv", "sweep_summary", |w| Ok(sweep.write_csv(w)?))?;
    let words = sweep.rows.len() / 3;
    let all_modes = (0..words).filter(|k| sweep.rows[3 * k..3 * k + 3].iter().all(|r| r.realized)).count();
    println!("switch: {all_modes}/{words} words realized in all three modes");
    for r in sweep.failures() {
        println!("  {:?} {}: {}", r.word, r.mode, r.error.as_deref().unwrap_or("not realized"));
    }
    Ok(())
}

#[derive(Serialize)]
struct FamilyMember {
    closing_winding: i64,
    closure_error: f64,
    distance_to_homoclinic: f64,
}

#[derive(Serialize)]
struct PeriodicFile<'a> {
    point: &'a PeriodicPoint,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    family: Vec<FamilyMember>,
}

fn periodic(cli: &Cli, a: &PeriodicArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let m = a.word.len().saturating_sub(1);
    let windings = windings_or_default(&a.windings, m)?;
    let p = find_reversible_periodic(&a.word, &windings, &mp)?;
    let mut all = vec![p.clone()];
    let mut family = Vec::new();
    if let Some([lo, hi]) = a.closing {
        let (h, _) = homoclinic_for_word(&a.word[..m], &windings[..m - 1], &mp)?;
        for n in lo..=hi {
            let mut w = windings.clone();
            w[m - 1] = n;
            let q = find_reversible_periodic(&a.word, &w, &mp)?;
            family.push(FamilyMember {
                closing_winding: n,
                closure_error: q.closure_error,
                distance_to_homoclinic: q.point.distance(&h.point).to_f64(),
            });
            all.push(q);
        }
    }
    out.write("periodic.csv", "periodic", |w| Ok(write_periodic_csv(&all, w)?))?;
    out.json("periodic.json", "periodic", &PeriodicFile { point: &p, family })?;
    println!("periodic: half period {}, closure {:e}, word {:?}", p.half_period, p.closure_error, p.word);
    Ok(())
}

fn read_sweep(cli: &Cli, path: &Option<PathBuf>) -> Result<SweepReport, CliError> {
    let path = path.clone().unwrap_or_else(|| cli.out.join("sweep.json"));
    let file = std::fs::File::open(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    SweepReport::read_json(std::io::BufReader::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn entropy(cli: &Cli, a: &EntropyArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let sweep = read_sweep(cli, &a.sweep)?;
    let k = a.word_len.unwrap_or(sweep.max_len);
    let bound = entropy_lower_bound(&sweep, k, &mp)?;
    out.json("entropy.json", "entropy", &bound)?;
    println!("{:.4}", bound.value);
    if bound.incomplete {
        println!("incomplete sweep: {} of {} words of length {k} witnessed", bound.witnessed, bound.total);
    }
    Ok(())
}

fn parse_point(text: &str) -> Result<SigmaPoint<Dd>, CliError> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let v = v.get("point").cloned().unwrap_or(v);
    if let Ok(p) = serde_json::from_value::<SigmaPoint<Dd>>(v.clone()) {
        return Ok(p);
    }
    let p: SigmaPoint<f64> = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("not a point: {e}")))?;
    Ok(SigmaPoint::new(Dd::from_f64(p.a), Dd::from_f64(p.b), Dd::from_f64(p.c)))
}

fn orbit(cli: &Cli, a: &OrbitArgs, out: &mut Outputs) -> Result<(), CliError> {
    let mp = validated(cli)?;
    let point = match (&a.point, a.word.is_empty()) {
        (Some(p), _) => parse_point(&std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?)?,
        (None, false) => {
            let sweep = read_sweep(cli, &a.sweep)?;
            let row = sweep
                .rows_for(SweepMode::Switching)
                .find(|r| r.word == a.word)
                .ok_or_else(|| CliError::Usage(format!("word {:?} is not in the sweep", a.word)))?;
            row.point.ok_or_else(|| CliError::Usage(format!("word {:?} has no switching point", a.word)))?
        }
        (None, true) => return Err(CliError::Usage("give --point or --word".into())),
    };
    let trace = trace_orbit(&point, a.steps, a.steps, &mp)?;
    let report = verify_superhomoclinic(&point, a.depth.unwrap_or(a.steps), &mp);
    out.write("orbit.csv", "orbit", |w| Ok(trace.write_csv(w)?))?;
    out.json("convergence.json", "convergence", &report)?;
    let fwd: Vec<usize> = trace.steps.iter().filter(|s| s.step >= 0).map(|s| s.symbol).collect();
    let bwd: Vec<usize> = trace.steps.iter().rev().filter(|s| s.step <= 0).map(|s| s.symbol).collect();
    println!("orbit: forward {fwd:?} ({:?}), backward {bwd:?} ({:?})", trace.forward_stop, trace.backward_stop);
    Ok(())
}
