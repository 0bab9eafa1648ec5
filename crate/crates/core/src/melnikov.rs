//! The Melnikov primitive
//!
//! ```text
//! M_ω(t₀, v₀) = −ε ∫ (1 − cos u^ε(t−t₀)) f(u^ε(t−t₀), v₀ + ω(t−t₀), t) dt
//! ```
//!
//! integrated along the unperturbed separatrix, its scan over the fundamental
//! square, and the non-degeneracy condition (S2). The integrand envelope is
//! exactly `2·sech²(√ε (t−t₀))`, which fixes the truncation window; `M` never
//! reads `μ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{max_gap_neighborhoods, GapAnalysis, TorusField};
use crate::model::SystemParams;
use crate::quad::composite_gl16;
use crate::separatrix::separatrix_u;
use crate::TAU;

/// Field of `M_ω` samples over `[0, 2π)²`.
pub type MelnikovField = TorusField;

/// Truncation half-width: `2 sech²(√ε W) < 1e−14`.
pub fn truncation_window(epsilon: f64) -> f64 {
    // 2 sech²(x) ≈ 8 e^{−2x}; 8 e^{−2x} < 1e−14 at x ≈ 17.2.
    18.0 / epsilon.sqrt()
}

/// Quadrature panel width resolving both the separatrix pulse and the
/// coupling's oscillation in `t`.
fn panel_width(params: &SystemParams, omega: f64) -> f64 {
    let mut freq: f64 = 1.0 + omega.abs();
    for term in &params.coupling.terms {
        let local = f64::from(term.freq_u.abs()) * 2.0 * params.epsilon.sqrt()
            + f64::from(term.freq_v.abs()) * omega.abs()
            + f64::from(term.freq_t.abs());
        freq = freq.max(local);
    }
    (0.5 / params.epsilon.sqrt()).min(2.0 / freq).min(0.5)
}

/// Evaluate `M_ω(t₀, v₀)` by composite quadrature on the truncated window.
pub fn melnikov_primitive(params: &SystemParams, omega: f64, t0: f64, v0: f64) -> f64 {
    let e = params.epsilon;
    let re = e.sqrt();
    let w = truncation_window(e);
    let panel = panel_width(params, omega);
    let integrand = |tau: f64| {
        let s = 1.0 / (re * tau).cosh();
        let env = 2.0 * s * s; // 1 − cos u^ε(τ)
        let u = separatrix_u(e, tau);
        env * params.coupling.eval(u, v0 + omega * tau, tau + t0)
    };
    -e * composite_gl16(-w, w, panel, integrand)
}

/// Fill the torus grid with `M_ω` samples; the samples are independent
/// quadratures and are computed in parallel.
pub fn scan_field(params: &SystemParams, omega: f64, n_t: usize, n_v: usize) -> MelnikovField {
    assert!(n_t >= 8 && n_v >= 8, "field resolutions must be at least 8");
    let ht = TAU / n_t as f64;
    let hv = TAU / n_v as f64;
    let values: Vec<f64> = (0..n_t * n_v)
        .into_par_iter()
        .map(|idx| {
            let i = idx % n_t;
            let j = idx / n_t;
            melnikov_primitive(params, omega, i as f64 * ht, j as f64 * hv)
        })
        .collect();
    TorusField::new(omega, n_t, n_v, values)
}

/// Locate the global minima of a field and grow their maximal sublevel
/// neighborhoods; the (S2) gap is a quarter of the achieved boundary gap.
///
/// `diameter_cap` bounds each neighborhood's diameter (pass `f64::INFINITY`
/// to only require boundedness); fields flat to `flat_tol` report no gap.
pub fn find_minima_with_gap(
    field: &MelnikovField,
    diameter_cap: f64,
    flat_tol: f64,
) -> GapAnalysis {
    max_gap_neighborhoods(field, diameter_cap, flat_tol)
}

/// Report for condition (S2) over an `ω`-interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S2Report {
    pub omega_range: (f64, f64),
    /// Uniform gap `Δ̃₀` (the boundary gap is `4Δ̃₀`), minimized over `ω`.
    pub delta0_tilde: f64,
    /// Largest neighborhood diameter over the `ω`-grid.
    pub r: f64,
    /// Diameter cap enforced during the scans, `R√ε ≤ 1/144`.
    pub diameter_cap: f64,
    pub per_omega: Vec<S2Slice>,
    pub pass: bool,
}

/// Per-`ω` slice of an [`S2Report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S2Slice {
    pub omega: f64,
    pub gap: GapAnalysis,
}

/// Scan `M_ω` over `n_omega` speeds in `[omega_lo, omega_hi]` and check (S2):
/// a uniform positive `Δ̃₀` with neighborhoods of diameter `R`, `R√ε ≤ 1/144`.
pub fn check_s2(
    params: &SystemParams,
    omega_lo: f64,
    omega_hi: f64,
    n_omega: usize,
    n_t: usize,
    n_v: usize,
) -> S2Report {
    assert!(omega_hi >= omega_lo && n_omega >= 1);
    let cap = 1.0 / (144.0 * params.epsilon.sqrt());
    let omegas: Vec<f64> = if n_omega == 1 {
        vec![0.5 * (omega_lo + omega_hi)]
    } else {
        (0..n_omega)
            .map(|i| omega_lo + (omega_hi - omega_lo) * i as f64 / (n_omega - 1) as f64)
            .collect()
    };
    let per_omega: Vec<S2Slice> = omegas
        .iter()
        .map(|&omega| {
            let field = scan_field(params, omega, n_t, n_v);
            let gap = find_minima_with_gap(&field, cap, 1e-9);
            S2Slice { omega, gap }
        })
        .collect();
    let delta0_tilde = per_omega
        .iter()
        .map(|s| s.gap.gap / 4.0)
        .fold(f64::INFINITY, f64::min);
    let delta0_tilde = if delta0_tilde.is_finite() {
        delta0_tilde
    } else {
        0.0
    };
    let r = per_omega
        .iter()
        .map(|s| s.gap.max_diameter)
        .fold(0.0f64, f64::max);
    let all_pass = per_omega.iter().all(|s| s.gap.pass);
    let pass = all_pass && delta0_tilde > 0.0 && r * params.epsilon.sqrt() <= 1.0 / 144.0 + 1e-12;
    S2Report {
        omega_range: (omega_lo, omega_hi),
        delta0_tilde,
        r,
        diameter_cap: cap,
        per_omega,
        pass,
    }
}
