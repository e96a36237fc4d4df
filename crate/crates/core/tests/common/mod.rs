#![allow(dead_code)]

//! Reference integrators used as oracles for the closed-form maps.

use bifocus::{ModelParams, Point4};

/// Right-hand side of the linear bifocus in `R^4`.
pub fn linear_field(x: [f64; 4], mp: &ModelParams) -> [f64; 4] {
    let (a, w) = (mp.alpha, mp.omega);
    [-a * x[0] - w * x[1], w * x[0] - a * x[1], a * x[2] + w * x[3], -w * x[2] + a * x[3]]
}

pub fn rk4<const N: usize>(mut x: [f64; N], t: f64, steps: usize, f: impl Fn([f64; N]) -> [f64; N]) -> [f64; N] {
    let h = t / steps as f64;
    let axpy = |x: &[f64; N], k: &[f64; N], s: f64| std::array::from_fn(|i| x[i] + s * k[i]);
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(axpy(&x, &k1, h / 2.0));
        let k3 = f(axpy(&x, &k2, h / 2.0));
        let k4 = f(axpy(&x, &k3, h));
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    x
}

/// Time for `ṙ = α r` to grow from `r0` to `r1`, by stepping and bisecting the last step.
pub fn growth_time(r0: f64, r1: f64, alpha: f64, h: f64) -> f64 {
    let step = |r: f64, h: f64| rk4([r], h, 1, |x| [alpha * x[0]])[0];
    let (mut r, mut t) = (r0, 0.0);
    while step(r, h) < r1 {
        r = step(r, h);
        t += h;
    }
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if step(r, mid) < r1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t + 0.5 * (lo + hi)
}

/// Flows `p` through the linear system for time `t`.
pub fn flow(p: &Point4, t: f64, mp: &ModelParams) -> Point4 {
    let steps = ((t * mp.omega.max(mp.alpha)) / 2e-3).ceil().max(1.0) as usize;
    let x = rk4(p.as_array(), t, steps, |x| linear_field(x, mp));
    Point4::new(x[0], x[1], x[2], x[3])
}

pub fn rel_err(a: &Point4, b: &Point4) -> f64 {
    a.distance(b) / b.norm().max(1e-300)
}
