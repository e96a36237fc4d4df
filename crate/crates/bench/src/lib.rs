//! Fixtures shared by the benchmarks.

use bifocus::{Dd, ModelParams, Real, SigmaPoint};

/// Points of `V_1` on a small Fibonacci lattice, most of which return.
pub fn lattice(mp: &ModelParams, n: usize) -> Vec<SigmaPoint<Dd>> {
    let q = mp.branches[0].q_sigma;
    (0..n)
        .map(|k| {
            let t = k as f64 * 0.618_033_988_749_895;
            let r = 0.9 * mp.v_radius * (0.05 + 0.95 * t.fract()).sqrt();
            let a = std::f64::consts::TAU * (t * 1.3).fract();
            SigmaPoint::new(Dd::from_f64(q[0] + r * a.cos()), Dd::from_f64(q[1] + r * a.sin()), Dd::from_f64(0.2 * r * (3.0 * a).sin()))
        })
        .collect()
}
