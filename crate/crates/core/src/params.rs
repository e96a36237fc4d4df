//! Model parameters, defaults and the validation report.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3};

/// Data of one homoclinic branch `γ_i`.
///
/// The transition from the exit section to Σ along `γ_i` is
/// `Π^u_i(u) = q_i + A u + Q(u)` in the local coordinates
/// `u = (u1, u2, φ_u - φ_i)` around the exit point `q_i^u = (0, 0, φ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    /// Angle `φ_i` at which `γ_i` leaves through the exit section.
    pub phi_u_anchor: f64,
    /// Position of `q_i = γ_i ∩ Σ` in the Fix-plane `c = 0`.
    pub q_sigma: [f64; 2],
    /// Linear part `A` of the transition, rows are `(a, b, c)`.
    pub linear_part: [[f64; 3]; 3],
    /// Optional quadratic correction, `Q(u)_k = Σ H[k][l][m] u_l u_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<[[[f64; 3]; 3]; 3]>,
}

impl BranchParams {
    pub fn q(&self) -> [f64; 3] {
        [self.q_sigma[0], self.q_sigma[1], 0.0]
    }

    /// Tangent of the unstable manifold trace `W^u_i` on Σ at `q_i`.
    pub fn unstable_tangent(&self) -> [f64; 3] {
        linalg::column(&self.linear_part, 2)
    }

    /// Tangent of the stable manifold trace `W^s_i`, the mirror image of the unstable one.
    pub fn stable_tangent(&self) -> [f64; 3] {
        let t = self.unstable_tangent();
        [t[0], t[1], -t[2]]
    }

    pub fn linear_inverse(&self) -> Option<Mat3<f64>> {
        linalg::inverse(&self.linear_part)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub omega: f64,
    /// Radius `r` of the entrance and exit sections.
    pub section_radius: f64,
    pub n_branches: usize,
    pub branches: Vec<BranchParams>,
    /// Radius of the ball `V_i` around each `q_i` on Σ.
    pub v_radius: f64,
    /// Angular half-width of the window `C_i^out` around `φ_i`.
    pub c_radius: f64,
}

impl ModelParams {
    /// Reference configuration with `n` branches spread evenly around the exit circle.
    pub fn default_for(n: usize) -> Self {
        let branches = (0..n)
            .map(|k| {
                let theta = TAU * k as f64 / n as f64;
                BranchParams {
                    phi_u_anchor: theta,
                    q_sigma: [0.5 * theta.cos(), 0.5 * theta.sin()],
                    linear_part: [[0.1, 0.01 * k as f64, 0.3], [0.0, 0.1, 0.3], [0.05, -0.03, 1.0]],
                    quadratic: None,
                }
            })
            .collect();
        ModelParams { alpha: 1.0, omega: 6.0, section_radius: 1.0, n_branches: n, branches, v_radius: 0.05, c_radius: 0.25 }
    }

    /// 1-based branch access.
    pub fn branch(&self, i: usize) -> Result<&BranchParams> {
        if i == 0 || i > self.branches.len() {
            return Err(Error::InvalidRequest(format!("branch {i} out of range 1..={}", self.branches.len())));
        }
        Ok(&self.branches[i - 1])
    }

    pub fn check_symbol(&self, i: usize) -> Result<()> {
        self.branch(i).map(|_| ())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    /// `ω T / 2π` per unit of `ln(r/ρ)`: how fast windings accumulate.
    pub fn twist(&self) -> f64 {
        self.omega / self.alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    /// Signed slack of the inequality; negative means violated.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, margin: f64, detail: impl Into<String>) {
        self.checks.push(ValidationCheck { name: name.into(), passed: margin > 0.0 && margin.is_finite(), margin, detail: detail.into() });
    }
}

fn row_norm(m: &Mat3<f64>, rows: &[usize]) -> f64 {
    rows.iter().flat_map(|&i| m[i].iter()).map(|x| x * x).sum::<f64>().sqrt()
}

fn tensor_norm(h: &[[[f64; 3]; 3]; 3]) -> f64 {
    h.iter().flatten().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks the structural hypotheses and the consistency of the neighbourhoods.
pub fn validate_params(mp: &ModelParams) -> ValidationReport {
    let mut rep = ValidationReport { checks: Vec::new() };
    rep.push("alpha_positive", mp.alpha, format!("alpha = {}", mp.alpha));
    rep.push("omega_positive", mp.omega, format!("omega = {}", mp.omega));
    rep.push("section_radius_positive", mp.section_radius, format!("r = {}", mp.section_radius));
    rep.push("v_radius_positive", mp.v_radius, format!("v_radius = {}", mp.v_radius));
    rep.push("c_radius_positive", mp.c_radius, format!("c_radius = {}", mp.c_radius));
    let n = mp.branches.len();
    rep.push(
        "branch_count",
        if n >= 1 && n == mp.n_branches { 1.0 } else { -1.0 },
        format!("n_branches = {}, branches given = {}", mp.n_branches, n),
    );
    if n == 0 {
        return rep;
    }

    for (k, b) in mp.branches.iter().enumerate() {
        let i = k + 1;
        let a = &b.linear_part;
        let scale = row_norm(a, &[0, 1, 2]);
        let det = linalg::det(a);
        rep.push(format!("branch_{i}_invertible"), det.abs() / scale.powi(3).max(f64::MIN_POSITIVE), format!("det A = {det:e}"));
        let tu = b.unstable_tangent();
        let ts = b.stable_tangent();
        let sin = linalg::norm(&linalg::cross(&tu, &ts)) / (linalg::norm(&tu) * linalg::norm(&ts));
        rep.push(format!("branch_{i}_quasi_transverse"), sin, format!("sin angle(W^u, W^s) at q = {sin:.3e}"));
        let off_fix = tu[2].abs() / linalg::norm(&tu);
        rep.push(format!("branch_{i}_unstable_leaves_fix"), off_fix, format!("|c-component of W^u tangent| = {off_fix:.3e}"));
        rep.push(
            format!("branch_{i}_anchor_finite"),
            if b.phi_u_anchor.is_finite() && b.q_sigma.iter().all(|x| x.is_finite()) { 1.0 } else { -1.0 },
            "anchor angle and q are finite",
        );
        if let Some(inv) = b.linear_inverse() {
            let phase = mp.v_radius * row_norm(&inv, &[2]);
            rep.push(
                format!("branch_{i}_window_contains_preimage"),
                mp.c_radius - phase,
                format!("preimage of V spans {phase:.3e} rad of the exit circle"),
            );
            let radial = mp.v_radius * row_norm(&inv, &[0, 1]);
            rep.push(
                format!("branch_{i}_preimage_inside_section"),
                mp.section_radius - radial,
                format!("preimage of V reaches radius {radial:.3e}"),
            );
            if let Some(h) = &b.quadratic {
                let bound = mp.v_radius * tensor_norm(h) * row_norm(&inv, &[0, 1, 2]) * 4.0;
                rep.push(
                    format!("branch_{i}_quadratic_small"),
                    0.5 - bound,
                    format!("relative size of the quadratic term on V ~ {bound:.3e}"),
                );
            }
        }
    }

    let mut min_gap = f64::INFINITY;
    let mut min_angle = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let (p, q) = (&mp.branches[i], &mp.branches[j]);
            let d = (p.q_sigma[0] - q.q_sigma[0]).hypot(p.q_sigma[1] - q.q_sigma[1]);
            min_gap = min_gap.min(d - 2.0 * mp.v_radius);
            min_angle = min_angle.min(crate::geometry::circular_distance(p.phi_u_anchor, q.phi_u_anchor) - 2.0 * mp.c_radius);
        }
    }
    if n > 1 {
        rep.push("v_balls_disjoint", min_gap, format!("smallest gap between V balls = {min_gap:.3e}"));
        rep.push("exit_windows_disjoint", min_angle, format!("smallest gap between exit windows = {min_angle:.3e} rad"));
    }
    rep.push("exit_window_proper", PI - mp.c_radius, format!("c_radius = {} must stay below π", mp.c_radius));
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for n in 1..=4 {
            let rep = validate_params(&ModelParams::default_for(n));
            assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn tangent_w_u_in_fix_fails() {
        let mut mp = ModelParams::default_for(2);
        mp.branches[0].linear_part[2][2] = 0.0;
        let rep = validate_params(&mp);
        assert!(!rep.passed());
        assert!(rep.failures().any(|c| c.name == "branch_1_quasi_transverse"));
    }

    #[test]
    fn negative_alpha_fails() {
        let mut mp = ModelParams::default_for(2);
        mp.alpha = -1.0;
        assert!(validate_params(&mp).failures().any(|c| c.name == "alpha_positive"));
    }

    #[test]
    fn json_roundtrip() {
        let mp = ModelParams::default_for(3);
        let back = ModelParams::from_json_str(&mp.to_json_string().unwrap()).unwrap();
        assert_eq!(mp, back);
    }
}
