//! The unperturbed separatrix and the explicit comparison curves.
//!
//! The building block is `w̃(t) = 4·arctan(exp(√(ε(1−2√μ)) t))`, a separatrix
//! of a slightly softened pendulum, corrected by a cubic `ε^{3/2}√μ (t₁−t)³`
//! below the junction `t₁` where `w̃ = π + 2√μ`. Shifting the π-crossing to
//! the origin yields `z⁺`; reflecting through `(0, π)` yields `z⁻`. The tilde
//! variants `z̃±` replace the softened separatrix by a slightly super-critical
//! pendulum orbit (energy above the separatrix), so they cross `2π + √(εμ)`
//! in finite time `T̃`.
//!
//! All curves are verified, not trusted: [`verify_stationary_supersolution`]
//! evaluates the worst-case differential-inequality margin on a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::TAU;

const PI: f64 = std::f64::consts::PI;

/// `u^(ε)(t) = 4·arctan(e^{√ε t})`, the unperturbed pendulum separatrix.
pub fn separatrix_u(epsilon: f64, t: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    four_atan_exp(epsilon.sqrt() * t)
}

/// Derivative of the separatrix, `2√ε sech(√ε t)`.
pub fn separatrix_u_t(epsilon: f64, t: f64) -> f64 {
    let r = epsilon.sqrt();
    2.0 * r * sech(r * t)
}

/// `4·arctan(e^x)`, evaluated so that both tails keep full precision.
fn four_atan_exp(x: f64) -> f64 {
    if x >= 0.0 {
        TAU - 4.0 * (-x).exp().atan()
    } else {
        4.0 * x.exp().atan()
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Which comparison curve a [`PiecewiseCurve`] realizes. The kind fixes the
/// sign of the differential inequality the curve is supposed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// The exact separatrix; saturates the inequality at `μ = 0`.
    Separatrix,
    /// Strict stationary super-solution on `(−∞, 3/(4√ε))`.
    ZMinus,
    /// Strict stationary sub-solution on `(−3/(4√ε), ∞)`.
    ZPlus,
    /// Strict stationary sub-solution (tilde construction).
    ZTildeMinus,
    /// Strict stationary super-solution (tilde construction).
    ZTildePlus,
}

/// Dense table of a pendulum orbit `u_tt = ε̃ sin u`, monotone in `t`.
#[derive(Debug, Clone)]
struct PendulumTable {
    h: f64,
    u: Vec<f64>,
    ut: Vec<f64>,
    eps_tilde: f64,
}

impl PendulumTable {
    /// Integrate from `u(0) = π`, `u_t(0) = 2√ε̃(1+δ²)` until `u ≥ u_stop`.
    fn integrate(eps_tilde: f64, delta: f64, u_stop: f64) -> Self {
        let h = 1e-3 / eps_tilde.sqrt();
        let mut u = vec![PI];
        let mut ut = vec![2.0 * eps_tilde.sqrt() * (1.0 + delta * delta)];
        let f = |u: f64, ut: f64| -> (f64, f64) { (ut, eps_tilde * u.sin()) };
        while *u.last().unwrap() < u_stop {
            let (y, yt) = (*u.last().unwrap(), *ut.last().unwrap());
            let (k1, l1) = f(y, yt);
            let (k2, l2) = f(y + 0.5 * h * k1, yt + 0.5 * h * l1);
            let (k3, l3) = f(y + 0.5 * h * k2, yt + 0.5 * h * l2);
            let (k4, l4) = f(y + h * k3, yt + h * l3);
            u.push(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            ut.push(yt + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4));
            if u.len() > 40_000_000 {
                panic!("pendulum orbit failed to reach {u_stop}");
            }
        }
        PendulumTable {
            h,
            u,
            ut,
            eps_tilde,
        }
    }

    fn t_max(&self) -> f64 {
        self.h * (self.u.len() - 1) as f64
    }

    /// Cubic Hermite evaluation of `(u, u_t, u_tt)` at `t ∈ [0, t_max]`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let x = (t / self.h).clamp(0.0, (self.u.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.u.len() - 2);
        let s = x - i as f64;
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        let (m0, m1) = (self.ut[i] * self.h, self.ut[i + 1] * self.h);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let u = h00 * u0 + h10 * m0 + h01 * u1 + h11 * m1;
        // Same scheme for u_t, with nodal derivative u_tt = ε̃ sin u.
        let (a0, a1) = (
            self.eps_tilde * u0.sin() * self.h,
            self.eps_tilde * u1.sin() * self.h,
        );
        let ut = h00 * self.ut[i] + h10 * a0 + h01 * self.ut[i + 1] + h11 * a1;
        let utt = self.eps_tilde * u.sin();
        (u, ut, utt)
    }
}

/// Analytic core shared by all curve variants: `w(x)` is either the softened
/// separatrix `w̃` or a tabulated pendulum orbit, plus the cubic correction
/// `c (t₁ − x)³` for `x ≤ t₁`.
#[derive(Debug, Clone)]
enum Core {
    Separatrix {
        rate: f64,
    },
    Soft {
        beta: f64,
        c_cubic: f64,
        t1: f64,
    },
    Pendulum {
        table: std::sync::Arc<PendulumTable>,
        c_cubic: f64,
        t1: f64,
    },
}

impl Core {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Core::Separatrix { rate } => {
                let w = four_atan_exp(rate * x);
                let wt = 2.0 * rate * sech(rate * x);
                let wtt = rate * rate * w.sin();
                (w, wt, wtt)
            }
            Core::Soft { beta, c_cubic, t1 } => {
                let r = beta.sqrt();
                let w = four_atan_exp(r * x);
                let wt = 2.0 * r * sech(r * x);
                let wtt = beta * w.sin();
                if x <= *t1 {
                    let d = t1 - x;
                    (
                        w + c_cubic * d * d * d,
                        wt - 3.0 * c_cubic * d * d,
                        wtt + 6.0 * c_cubic * d,
                    )
                } else {
                    (w, wt, wtt)
                }
            }
            Core::Pendulum { table, c_cubic, t1 } => {
                let (w, wt, wtt) = table.eval(x);
                if x <= *t1 {
                    let d = t1 - x;
                    (
                        w + c_cubic * d * d * d,
                        wt - 3.0 * c_cubic * d * d,
                        wtt + 6.0 * c_cubic * d,
                    )
                } else {
                    (w, wt, wtt)
                }
            }
        }
    }

    /// `2π − w(x)` without the cancellation of the direct subtraction; the
    /// separatrix complement is the time-reversed separatrix.
    fn complement(&self, x: f64) -> f64 {
        match self {
            Core::Separatrix { rate } => four_atan_exp(-rate * x),
            Core::Soft { beta, c_cubic, t1 } => {
                let c = four_atan_exp(-beta.sqrt() * x);
                if x <= *t1 {
                    let d = t1 - x;
                    c - c_cubic * d * d * d
                } else {
                    c
                }
            }
            Core::Pendulum { .. } => TAU - self.eval(x).0,
        }
    }
}

/// A comparison curve with analytic first and second derivatives.
///
/// Minus-type curves are realized as `z(t) = 2π − w(−t + t₀)`, plus-type as
/// `z(t) = w(t + t₀)`, where `w` carries the construction.
#[derive(Debug, Clone)]
pub struct PiecewiseCurve {
    pub kind: CurveKind,
    /// Domain of validity of the differential inequality; may be unbounded.
    pub domain: (f64, f64),
    /// Junction points of the construction, in curve coordinates.
    pub breakpoints: Vec<f64>,
    core: Core,
    t0: f64,
    reflect: bool,
}

impl PiecewiseCurve {
    /// Value, first and second derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let x = if self.reflect {
            -t + self.t0
        } else {
            t + self.t0
        };
        let (w, wt, wtt) = self.core.eval(x);
        if self.reflect {
            (self.core.complement(x), wt, -wtt)
        } else {
            (w, wt, wtt)
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    /// Interval on which tails are within `1e-14` of their asymptotes,
    /// intersected with the domain.
    pub fn default_truncation(&self, epsilon: f64, mu: f64) -> (f64, f64) {
        let beta = (epsilon * (1.0 - 2.0 * mu.sqrt())).max(epsilon * 0.5);
        let reach = 34.0 / beta.sqrt();
        (self.domain.0.max(-reach), self.domain.1.min(reach))
    }

    /// Uniform samples `(t, value, derivative)` for export.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64, f64)> {
        assert!(n >= 2 && hi > lo);
        (0..n)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let (z, zt, _) = self.eval(t);
                (t, z, zt)
            })
            .collect()
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::internal(format!(
            "bisection bracket [{lo}, {hi}] does not straddle a root ({flo}, {fhi})"
        )));
    }
    while hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Build the super-solution `z⁻` and sub-solution `z⁺` of the softened
/// construction. At `μ = 0` both degenerate to the exact separatrix.
pub fn build_supersub(params: &SystemParams) -> Result<(PiecewiseCurve, PiecewiseCurve)> {
    let e = params.epsilon;
    let m = params.mu;
    if !(e > 0.0) {
        return Err(Error::invalid_input("epsilon must be positive"));
    }
    let re = e.sqrt();
    if m == 0.0 {
        let sep = |dom: (f64, f64)| PiecewiseCurve {
            kind: CurveKind::Separatrix,
            domain: dom,
            breakpoints: vec![],
            core: Core::Separatrix { rate: re },
            t0: 0.0,
            reflect: false,
        };
        return Ok((
            sep((f64::NEG_INFINITY, 0.75 / re)),
            sep((-0.75 / re, f64::INFINITY)),
        ));
    }
    let beta = e * (1.0 - 2.0 * m.sqrt());
    if beta <= 0.0 {
        return Err(Error::invalid_input(
            "mu too large: 1 - 2*sqrt(mu) must stay positive",
        ));
    }
    let rb = beta.sqrt();
    let c_cubic = e.powf(1.5) * m.sqrt();
    // t1 in (0, 2 sqrt(mu/eps)]: the junction where the softened separatrix
    // reaches pi + 2 sqrt(mu).
    let target1 = PI + 2.0 * m.sqrt();
    let t1 = bisect(0.0, 2.0 * (m / e).sqrt(), |t| {
        four_atan_exp(rb * t) - target1
    })?;
    // t0 in (-sqrt(mu), 0): the pi-crossing of the corrected curve.
    let w = Core::Soft { beta, c_cubic, t1 };
    let t0 = bisect(-m.sqrt(), 0.0, |t| w.eval(t).0 - PI)?;
    let z_plus = PiecewiseCurve {
        kind: CurveKind::ZPlus,
        domain: (-0.75 / re, f64::INFINITY),
        breakpoints: vec![t1 - t0],
        core: w.clone(),
        t0,
        reflect: false,
    };
    let z_minus = PiecewiseCurve {
        kind: CurveKind::ZMinus,
        domain: (f64::NEG_INFINITY, 0.75 / re),
        breakpoints: vec![-(t1 - t0)],
        core: w,
        t0,
        reflect: true,
    };
    Ok((z_minus, z_plus))
}

/// Build the tilde pair `z̃⁻`, `z̃⁺` together with the crossing time `T̃` at
/// which `z̃⁺(T̃) = 2π + √(εμ)`.
pub fn build_supersub_tilde(
    params: &SystemParams,
) -> Result<(PiecewiseCurve, PiecewiseCurve, f64)> {
    let e = params.epsilon;
    let m = params.mu;
    if !(m > 0.0) {
        return Err(Error::invalid_input("tilde construction requires mu > 0"));
    }
    let eps_tilde = e * (1.0 + 2.0 * m.sqrt());
    let delta = 2.0 * (eps_tilde * m).sqrt();
    let overshoot = TAU + (e * m).sqrt();
    let table = std::sync::Arc::new(PendulumTable::integrate(
        eps_tilde,
        delta,
        TAU + 2.0 * delta + 64.0 * delta,
    ));
    // t1: where the orbit reaches pi + 2 sqrt(mu).
    let target1 = PI + 2.0 * m.sqrt();
    let t1 = bisect(0.0, 2.0 * (m / e).sqrt(), |t| table.eval(t).0 - target1)?;
    let c_cubic = -e.powf(1.5) * m.sqrt();
    let w = Core::Pendulum {
        table: table.clone(),
        c_cubic,
        t1,
    };
    // t0 in (0, sqrt(mu)): the pi-crossing after subtraction of the cubic.
    let t0 = bisect(0.0, m.sqrt(), |t| w.eval(t).0 - PI)?;
    // The crossing of 2 pi + sqrt(eps mu) defines T~.
    let t_cross = bisect(t1, table.t_max(), |t| w.eval(t).0 - overshoot)?;
    let t_tilde = t_cross - t0;
    let z_tilde_plus = PiecewiseCurve {
        kind: CurveKind::ZTildePlus,
        domain: (0.0, t_tilde),
        breakpoints: vec![t1 - t0],
        core: w.clone(),
        t0,
        reflect: false,
    };
    let z_tilde_minus = PiecewiseCurve {
        kind: CurveKind::ZTildeMinus,
        domain: (-t_tilde, 0.0),
        breakpoints: vec![-(t1 - t0)],
        core: w,
        t0,
        reflect: true,
    };
    Ok((z_tilde_minus, z_tilde_plus, t_tilde))
}

/// Worst-case sub-solution margin `z_tt − ε sin z − εμ|sin z| − εμ(1−cos z)`;
/// positive means `z_tt ≥ ∂_u V(z, v, t)` for every admissible coupling.
pub fn sub_margin(params: &SystemParams, z: f64, ztt: f64) -> f64 {
    let e = params.epsilon;
    let m = params.mu;
    ztt - e * z.sin() - e * m * z.sin().abs() - e * m * (1.0 - z.cos())
}

/// Worst-case super-solution margin `−(z_tt − ε sin z + εμ|sin z| + εμ(1−cos z))`.
pub fn super_margin(params: &SystemParams, z: f64, ztt: f64) -> f64 {
    let e = params.epsilon;
    let m = params.mu;
    -(ztt - e * z.sin() + e * m * z.sin().abs() + e * m * (1.0 - z.cos()))
}

/// Grid verification report for one comparison curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind_checked: String,
    pub pass: bool,
    /// Minimum margin over the grid (strict-inequality kinds) or the maximum
    /// absolute margin (separatrix kind).
    pub min_margin: f64,
    pub argmin_t: f64,
    pub grid_n: usize,
    pub interval: (f64, f64),
}

/// Evaluate the worst-case differential-inequality margin of `curve` at
/// `grid_n` points of `interval`. Pass requires the strict sign dictated by
/// the curve's kind; the separatrix kind passes when the margin vanishes to
/// `1e-9` (it saturates the inequality at `μ = 0`).
pub fn verify_stationary_supersolution(
    params: &SystemParams,
    curve: &PiecewiseCurve,
    interval: (f64, f64),
    grid_n: usize,
) -> VerificationReport {
    assert!(grid_n >= 2, "grid_n must be at least 2");
    let (lo, hi) = interval;
    assert!(hi > lo, "empty verification interval");
    let mut min_margin = f64::INFINITY;
    let mut max_abs = 0.0f64;
    let mut argmin = lo;
    for i in 0..grid_n {
        let t = lo + (hi - lo) * i as f64 / (grid_n - 1) as f64;
        let (z, _, ztt) = curve.eval(t);
        let margin = match curve.kind {
            CurveKind::ZPlus | CurveKind::ZTildeMinus => sub_margin(params, z, ztt),
            CurveKind::ZMinus | CurveKind::ZTildePlus => super_margin(params, z, ztt),
            CurveKind::Separatrix => {
                let s = sub_margin(params, z, ztt);
                let sp = super_margin(params, z, ztt);
                if s.abs() > sp.abs() {
                    s
                } else {
                    sp
                }
            }
        };
        if margin < min_margin {
            min_margin = margin;
            argmin = t;
        }
        max_abs = max_abs.max(margin.abs());
    }
    let pass = match curve.kind {
        CurveKind::Separatrix => max_abs <= 1e-9,
        _ => min_margin > 0.0,
    };
    VerificationReport {
        kind_checked: format!("{:?}", curve.kind),
        pass,
        min_margin: if curve.kind == CurveKind::Separatrix {
            max_abs
        } else {
            min_margin
        },
        argmin_t: argmin,
        grid_n,
        interval,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CouplingFunction;

    fn params(epsilon: f64, mu: f64) -> SystemParams {
        SystemParams::new(epsilon, mu, CouplingFunction::arnold()).unwrap()
    }

    #[test]
    fn separatrix_values_and_limits() {
        for &e in &[0.25, 0.64, 1.0] {
            assert!((separatrix_u(e, 0.0) - PI).abs() < 1e-15);
        }
        // 2 pi - u <= 4 e^{-t} for eps = 1.
        for &t in &[1.0, 5.0, 10.0, 30.0] {
            let gap = TAU - separatrix_u(1.0, t);
            assert!(gap > 0.0 && gap <= 4.0 * (-t).exp());
        }
        assert!(separatrix_u(1.0, -40.0) < 1e-14);
    }

    #[test]
    fn separatrix_derivative_matches_finite_difference() {
        let h = 1e-6;
        for &e in &[0.25, 1.0] {
            for &t in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
                let fd = (separatrix_u(e, t + h) - separatrix_u(e, t - h)) / (2.0 * h);
                assert!((separatrix_u_t(e, t) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn separatrix_energy_identity() {
        for &e in &[0.25, 0.64, 1.0] {
            for i in 0..200 {
                let t = -10.0 + 0.1 * i as f64;
                let u = separatrix_u(e, t);
                let ut = separatrix_u_t(e, t);
                assert!((0.5 * ut * ut - e * (1.0 - u.cos())).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn separatrix_monotone() {
        let mut prev = separatrix_u(0.64, -20.0);
        for i in 1..400 {
            let cur = separatrix_u(0.64, -20.0 + 0.1 * i as f64);
            assert!(cur > prev);
            prev = cur;
        }
    }

    #[test]
    fn supersub_anchored_at_pi() {
        let p = params(0.64, 0.01);
        let (zm, zp) = build_supersub(&p).unwrap();
        assert!((zm.value(0.0) - PI).abs() < 1e-10);
        assert!((zp.value(0.0) - PI).abs() < 1e-10);
    }

    #[test]
    fn supersub_c1_at_breakpoints() {
        let p = params(0.64, 0.01);
        let (zm, zp) = build_supersub(&p).unwrap();
        for (curve, bp) in [(&zp, zp.breakpoints[0]), (&zm, zm.breakpoints[0])] {
            // Value jump across the junction (branch switch) is below 1e-10.
            let (vl, dl, _) = curve.eval(bp - 1e-13);
            let (vr, dr, _) = curve.eval(bp + 1e-13);
            assert!((vl - vr).abs() < 1e-10, "value jump {}", (vl - vr).abs());
            assert!(
                (dl - dr).abs() < 1e-10,
                "derivative jump {}",
                (dl - dr).abs()
            );
            // One-sided difference quotients agree to curvature accuracy.
            let d = 1e-6;
            let dm = (curve.value(bp) - curve.value(bp - d)) / d;
            let dp = (curve.value(bp + d) - curve.value(bp)) / d;
            assert!((dm - dp).abs() < 1e-5, "slope mismatch {}", (dm - dp).abs());
        }
    }

    #[test]
    fn supersub_close_to_separatrix() {
        // |z- − u^ε| ≤ C √(εμ); report-style check with C ≤ 4.
        let p = params(0.64, 0.01);
        let (zm, zp) = build_supersub(&p).unwrap();
        let scale = (p.epsilon * p.mu).sqrt();
        let mut worst = 0.0f64;
        for i in 0..=400 {
            let t = -20.0 + 0.05 * i as f64 * 20.0 / 10.0;
            if t <= 0.0 {
                worst = worst.max((zm.value(t) - separatrix_u(p.epsilon, t)).abs());
            }
            if t >= 0.0 && t <= 20.0 {
                worst = worst.max((zp.value(t) - separatrix_u(p.epsilon, t)).abs());
            }
        }
        assert!(worst <= 4.0 * scale, "measured C = {}", worst / scale);
    }

    #[test]
    fn supersub_derivative_bounded_below_near_zero() {
        let p = params(0.64, 0.01);
        let (zm, zp) = build_supersub(&p).unwrap();
        let re = p.epsilon.sqrt();
        for i in 0..200 {
            let t = -0.25 / re + 0.5 / re * i as f64 / 199.0;
            assert!(zp.eval(t).1 > re / 2.0);
            assert!(zm.eval(t).1 > re / 2.0);
        }
    }

    #[test]
    fn supersub_strictly_increasing_and_bounded() {
        let p = params(1.0, 1.0 / 16.0);
        let (zm, zp) = build_supersub(&p).unwrap();
        let (lo, hi) = zp.default_truncation(p.epsilon, p.mu);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..2000 {
            let t = lo + (hi - lo) * i as f64 / 1999.0;
            let v = zp.value(t);
            // Strict monotonicity, except in the last ulps of the asymptote.
            if TAU - v > 1e-12 {
                assert!(v > prev);
            } else {
                assert!(v >= prev);
            }
            prev = v;
        }
        let (lo, hi) = zm.default_truncation(p.epsilon, p.mu);
        prev = f64::NEG_INFINITY;
        for i in 0..2000 {
            let t = lo + (hi - lo) * i as f64 / 1999.0;
            let v = zm.value(t);
            assert!(
                v > prev && v > 0.0 && v < 1.5 * PI,
                "i = {i}, t = {t}, z- = {v}, prev = {prev}"
            );
            prev = v;
        }
    }

    #[test]
    fn supersub_exponential_tail() {
        // |z-(t)| <= c2 e^{-sqrt(eps)|t|/2} with measured c2 <= 10 over a sweep.
        for &(e, m) in &[(1.0, 1.0 / 16.0), (0.64, 0.01), (0.25, 0.01)] {
            let p = params(e, m);
            let (zm, _) = build_supersub(&p).unwrap();
            let (lo, _) = zm.default_truncation(e, m);
            let mut c2 = 0.0f64;
            for i in 0..2000 {
                let t = lo + (0.75 / e.sqrt() - lo) * i as f64 / 1999.0;
                c2 = c2.max(zm.value(t).abs() * (0.5 * e.sqrt() * t.abs()).exp());
            }
            assert!(c2 <= 10.0, "measured c2 = {c2} at eps = {e}, mu = {m}");
        }
    }

    #[test]
    fn z_plus_is_strict_sub_solution() {
        for &(e, m) in &[(1.0, 1.0 / 16.0), (0.64, 0.01), (0.25, 0.01)] {
            let p = params(e, m);
            let (zm, zp) = build_supersub(&p).unwrap();
            let re = e.sqrt();
            let rep = verify_stationary_supersolution(&p, &zp, (-0.75 / re, 20.0 / re), 100_000);
            assert!(rep.pass && rep.min_margin > 0.0, "z+ margin {:?}", rep);
            let rem = verify_stationary_supersolution(&p, &zm, (-20.0 / re, 0.75 / re), 100_000);
            assert!(rem.pass && rem.min_margin > 0.0, "z- margin {:?}", rem);
        }
    }

    #[test]
    fn separatrix_saturates_at_mu_zero_and_fails_at_positive_mu() {
        let p0 = params(0.64, 0.0);
        let (_, zp) = build_supersub(&p0).unwrap();
        assert_eq!(zp.kind, CurveKind::Separatrix);
        let rep = verify_stationary_supersolution(&p0, &zp, (-10.0, 10.0), 10_000);
        assert!(rep.pass && rep.min_margin <= 1e-9);

        // The exact separatrix is not a strict sub-solution once mu > 0.
        let p = params(0.64, 0.01);
        let sep = PiecewiseCurve {
            kind: CurveKind::ZPlus,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            breakpoints: vec![],
            core: Core::Separatrix {
                rate: p.epsilon.sqrt(),
            },
            t0: 0.0,
            reflect: false,
        };
        let rep = verify_stationary_supersolution(&p, &sep, (-10.0, 10.0), 10_000);
        assert!(!rep.pass && rep.min_margin < 0.0);
    }

    #[test]
    fn margins_shrink_as_mu_to_zero() {
        let mut prev = f64::INFINITY;
        for &m in &[0.04, 0.01, 0.0025, 0.000625] {
            let p = params(1.0, m);
            let (_, zp) = build_supersub(&p).unwrap();
            let rep = verify_stationary_supersolution(&p, &zp, (-0.7, 10.0), 20_000);
            let worst = rep.min_margin.abs().max(
                (0..20_000)
                    .map(|i| {
                        let t = -0.7 + 10.7 * i as f64 / 19_999.0;
                        let (z, _, ztt) = zp.eval(t);
                        sub_margin(&p, z, ztt).abs()
                    })
                    .fold(0.0, f64::max),
            );
            assert!(
                worst < prev + 1e-12,
                "margin magnitude not shrinking: {worst} vs {prev}"
            );
            prev = worst;
        }
    }

    #[test]
    fn tilde_construction_values() {
        let p = params(0.64, 0.01);
        let (ztm, ztp, t_tilde) = build_supersub_tilde(&p).unwrap();
        assert!((ztp.value(0.0) - PI).abs() < 1e-10);
        assert!((ztm.value(0.0) - PI).abs() < 1e-10);
        let overshoot = (p.epsilon * p.mu).sqrt();
        assert!((ztp.value(t_tilde) - TAU - overshoot).abs() < 1e-10);
        assert!((ztm.value(-t_tilde) + overshoot).abs() < 1e-10);
        // T~ <= c |log delta| / sqrt(eps~); report the measured constant.
        let eps_tilde = p.epsilon * (1.0 + 2.0 * p.mu.sqrt());
        let delta = 2.0 * (eps_tilde * p.mu).sqrt();
        let c = t_tilde * eps_tilde.sqrt() / delta.ln().abs();
        assert!(c < 5.0, "measured T~ constant {c}");
    }

    #[test]
    fn tilde_close_to_separatrix() {
        let p = params(0.64, 0.01);
        let (_, ztp, t_tilde) = build_supersub_tilde(&p).unwrap();
        let scale = (p.epsilon * p.mu).sqrt();
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let t = t_tilde * i as f64 / 1000.0;
            worst = worst.max((ztp.value(t) - separatrix_u(p.epsilon, t)).abs());
        }
        assert!(worst <= 6.0 * scale, "measured C = {}", worst / scale);
    }

    #[test]
    fn tilde_inequalities_hold_inside_the_torus_band() {
        // The strict inequalities hold up to the 2 pi crossing; verify there.
        let p = params(0.64, 0.01);
        let (ztm, ztp, t_tilde) = build_supersub_tilde(&p).unwrap();
        let t_2pi = bisect(0.0, t_tilde, |t| ztp.value(t) - (TAU - 1e-6)).unwrap();
        let rep = verify_stationary_supersolution(&p, &ztp, (1e-3, t_2pi), 50_000);
        assert!(rep.pass, "z~+ super margin {:?}", rep);
        let t_0 = bisect(-t_tilde, 0.0, |t| ztm.value(t) - 1e-6).unwrap();
        let rep = verify_stationary_supersolution(&p, &ztm, (t_0, -1e-3), 50_000);
        assert!(rep.pass, "z~- sub margin {:?}", rep);
    }

    #[test]
    fn sandwich_orderings() {
        let p = params(0.64, 0.01);
        let (zm, _) = build_supersub(&p).unwrap();
        let (ztm, _, t_tilde) = build_supersub_tilde(&p).unwrap();
        // u^eps <= z- on t <= 0, and z~- <= u^eps on [-T~, 0].
        for i in 0..1000 {
            let t = -t_tilde * i as f64 / 999.0;
            let sep = separatrix_u(p.epsilon, t);
            assert!(sep <= zm.value(t) + 1e-12, "u^eps > z- at {t}");
            assert!(ztm.value(t) <= sep + 1e-12, "z~- > u^eps at {t}");
        }
    }
}
