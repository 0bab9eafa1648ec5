//! Jump plans and the approximate shadowing orbit `q⁰`.
//!
//! A plan prescribes which tori the orbit visits (`ω_k`), roughly when the
//! transitions happen (`L̃_k`, multiples of 2π with spacing at least
//! `4L + 2π`), and the bookkeeping constants `M` and `ϖ`. Finalizing a plan
//! against the computed heteroclinics fixes the exact jump times `T̃_k`
//! (`≡ T_k mod 2π`, within `π` of `L̃_k`) and the rotator offsets `Ṽ_k`
//! (inductively, so consecutive pieces differ by less than a turn). The
//! orbit `q⁰` is then the smoothstep blend of the translated heteroclinics,
//! coinciding with the pure piece on `[T̃_k − L, T̃_k + L]`.

use serde::{Deserialize, Serialize};

use crate::barrier::MinimizerCurve;
use crate::error::{Error, Result};
use crate::gradientflow::{BoundaryCondition, Trajectory};
use crate::model::SystemParams;
use crate::TAU;

/// Smoothening pair `(φ⁻, φ⁺)` over `[a, b]`: `φ⁻` is 1 below `a`, 0 above
/// `b`, infinitely differentiable, and `φ⁻ + φ⁺ = 1` exactly.
pub fn smoothstep(a: f64, b: f64, t: f64) -> Result<(f64, f64)> {
    if !(a < b) {
        return Err(Error::invalid_input(format!(
            "smoothstep needs a < b, got [{a}, {b}]"
        )));
    }
    let phi_minus = if t <= a {
        1.0
    } else if t >= b {
        0.0
    } else {
        let w = b - a;
        let n = (-w / (b - t)).exp();
        let m = (-w / (t - a)).exp();
        n / (n + m)
    };
    Ok((phi_minus, 1.0 - phi_minus))
}

/// Derivative of `φ⁻`; magnitude is `O(1/(b−a))`.
pub fn smoothstep_deriv(a: f64, b: f64, t: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::invalid_input("smoothstep needs a < b"));
    }
    if t <= a || t >= b {
        return Ok(0.0);
    }
    let w = b - a;
    let n = (-w / (b - t)).exp();
    let m = (-w / (t - a)).exp();
    let dn = -n * w / ((b - t) * (b - t));
    let dm = m * w / ((t - a) * (t - a));
    Ok((dn * (n + m) - n * (dn + dm)) / ((n + m) * (n + m)))
}

/// Wrap into the half-open window `(−π, π]`.
pub fn wrap_half_open(d: f64) -> f64 {
    let m = ((d - std::f64::consts::PI) / TAU).ceil();
    d - TAU * m
}

/// `M = 2π + 2(ϖ+1)(R+μ) + 6 R^{1/2} ε^{1/4}`.
pub fn constant_m(varpi: f64, r: f64, mu: f64, epsilon: f64) -> f64 {
    assert!(r >= 0.0, "R must be nonnegative");
    TAU + 2.0 * (varpi + 1.0) * (r + mu) + 6.0 * r.sqrt() * epsilon.powf(0.25)
}

/// Static part of an itinerary: speeds and nominal jump times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    /// Gap speeds; jump `k` transitions `omegas[k] → omegas[k+1]`, so the
    /// list is one longer than `l_tilde`.
    pub omegas: Vec<f64>,
    /// Nominal jump times, multiples of 2π, strictly increasing.
    pub l_tilde: Vec<f64>,
    /// Blend half-width; `None` derives the largest admissible value
    /// `(min spacing − 2π)/4`.
    pub l: Option<f64>,
}

impl PlanSpec {
    pub fn jumps(&self) -> usize {
        self.l_tilde.len()
    }

    pub fn derived_l(&self) -> Result<f64> {
        if self.l_tilde.is_empty() {
            return Err(Error::invalid_input("a plan needs at least one jump"));
        }
        if self.omegas.len() != self.l_tilde.len() + 1 {
            return Err(Error::invalid_input(format!(
                "expected {} speeds for {} jumps",
                self.l_tilde.len() + 1,
                self.l_tilde.len()
            )));
        }
        if self.l_tilde.len() == 1 {
            return Ok(self.l.unwrap_or(TAU));
        }
        let min_gap = self
            .l_tilde
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let derived = (min_gap - TAU) / 4.0;
        if derived <= 0.0 {
            return Err(Error::invalid_input(format!(
                "nominal spacing {min_gap} leaves no room for blending"
            )));
        }
        match self.l {
            Some(l) if l > derived + 1e-9 => Err(Error::invalid_input(format!(
                "requested L = {l} exceeds the admissible {derived}"
            ))),
            Some(l) => Ok(l),
            None => Ok(derived),
        }
    }
}

/// The shadowing itinerary, finalized against the computed heteroclinics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPlan {
    pub omegas: Vec<f64>,
    /// Blend half-width; a quarter of the minimal effective jump spacing.
    pub l: f64,
    pub l_tilde: Vec<f64>,
    /// Exact jump times, `T̃_k ≡ T_k mod 2π` with `−π < T̃_k − L̃_k ≤ π`.
    pub t_tilde: Vec<f64>,
    /// Rotator offsets `Ṽ_k`.
    pub v_tilde: Vec<f64>,
    /// Anchors `(T_k, V_k)` of the underlying heteroclinics.
    pub anchors: Vec<(f64, f64)>,
    /// Gap lengths `L_k = T̃_{k+1} − T̃_k`.
    pub gap_lengths: Vec<f64>,
    pub m_const: f64,
    pub varpi: f64,
    /// Neighborhood diameter bound imported from the (S1) report.
    pub r: f64,
    /// Gap constant imported from the (S1) report.
    pub delta0: f64,
}

impl JumpPlan {
    pub fn jumps(&self) -> usize {
        self.t_tilde.len()
    }

    /// Jump index whose time is nearest to `t` (ties toward the lower k).
    pub fn nearest_jump(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, &tt) in self.t_tilde.iter().enumerate() {
            let d = (t - tt).abs();
            if d < dist - 1e-12 {
                dist = d;
                best = k;
            }
        }
        best
    }

    /// Distance to the nearest jump time.
    pub fn jump_distance(&self, t: f64) -> f64 {
        self.t_tilde
            .iter()
            .map(|&tt| (t - tt).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// The gap index `k(t)`: number of jumps at or before `t` (half-open
    /// intervals `(T̃_{j−1}, T̃_j]`), so `u ≈ 2·k(t)·π` away from jumps.
    pub fn gap_index(&self, t: f64) -> usize {
        self.t_tilde.iter().filter(|&&tt| t > tt).count()
    }

    /// Hash of the plan layout for artifact headers.
    pub fn layout_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut absorb = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &w in &self.omegas {
            absorb(w);
        }
        absorb(self.l);
        for &t in &self.t_tilde {
            absorb(t);
        }
        for &v in &self.v_tilde {
            absorb(v);
        }
        h
    }
}

/// Finalize a plan: fix `T̃_k` and `Ṽ_k` from the heteroclinic anchors.
/// `heteroclinics[k]` must connect `omegas[k] → omegas[k+1]`.
pub fn build_jump_plan(
    spec: &PlanSpec,
    heteroclinics: &[MinimizerCurve],
    s1_r: f64,
    s1_delta0: f64,
) -> Result<JumpPlan> {
    let jumps = spec.jumps();
    if heteroclinics.len() != jumps {
        return Err(Error::invalid_input(format!(
            "plan has {jumps} jumps but {} heteroclinics were supplied",
            heteroclinics.len()
        )));
    }
    let l = spec.derived_l()?;
    let mut t_tilde = Vec::with_capacity(jumps);
    let mut v_tilde = Vec::with_capacity(jumps);
    let mut anchors = Vec::with_capacity(jumps);
    for (k, het) in heteroclinics.iter().enumerate() {
        anchors.push(het.anchor);
        let lt = spec.l_tilde[k];
        t_tilde.push(lt + wrap_half_open(het.anchor.0 - lt));
        v_tilde.push(0.0); // filled below
    }
    // Induction for the rotator offsets, anchored at the lowest index.
    v_tilde[0] = anchors[0].1;
    for k in 1..jumps {
        let prev = PieceEval {
            curve: &heteroclinics[k - 1],
            shift_t: t_tilde[k - 1] - anchors[k - 1].0,
            shift_u: TAU * (k as f64 - 1.0),
            shift_v: v_tilde[k - 1] - anchors[k - 1].1,
            tail_rate: 0.0, // only the v-ramp is read here
        };
        let d = prev.eval(t_tilde[k]).1 - anchors[k].1;
        v_tilde[k] = anchors[k].1 + (d - wrap_half_open(d));
    }
    let gap_lengths = t_tilde.windows(2).map(|w| w[1] - w[0]).collect();
    let varpi = spec.omegas.iter().fold(1.0f64, |m, w| m.max(w.abs()));
    // Representative epsilon/mu enter M only through the caller's params;
    // the plan stores the layout-level constants.
    Ok(JumpPlan {
        omegas: spec.omegas.clone(),
        l,
        l_tilde: spec.l_tilde.clone(),
        t_tilde,
        v_tilde,
        anchors,
        gap_lengths,
        m_const: 0.0,
        varpi,
        r: s1_r,
        delta0: s1_delta0,
    })
}

/// Fill the plan's `M` from the system parameters.
pub fn with_constant_m(mut plan: JumpPlan, params: &SystemParams) -> JumpPlan {
    plan.m_const = constant_m(plan.varpi, plan.r, params.mu, params.epsilon);
    plan
}

/// Translated heteroclinic piece `q̃_k`.
struct PieceEval<'a> {
    curve: &'a MinimizerCurve,
    shift_t: f64,
    shift_u: f64,
    shift_v: f64,
    /// Linearized decay rate used to continue the `u`-tail beyond the
    /// stored window.
    tail_rate: f64,
}

impl<'a> PieceEval<'a> {
    /// Cubic (Catmull–Rom) interpolation of the underlying trajectory.
    /// Outside the stored window, `u` continues its exponential approach to
    /// the torus at the linearized rate and `v` continues the rotator ramp.
    fn eval(&self, t: f64) -> (f64, f64) {
        let q = &self.curve.trajectory;
        let tau = t - self.shift_t;
        let n = q.len();
        let x = (tau - q.t_lo) / q.dt;
        let rate = self.tail_rate;
        let (u, v) = if x <= 0.0 {
            let omega = self.curve.omega;
            let gap = q.u[0]; // left asymptote is 0
            (
                gap * (rate * (tau - q.t_lo)).exp(),
                q.v[0] + omega * (tau - q.t_lo),
            )
        } else if x >= (n - 1) as f64 {
            let omega = self.curve.omega_tilde.unwrap_or(self.curve.omega);
            let gap = q.u[n - 1] - TAU;
            (
                TAU + gap * (-rate * (tau - q.t_hi())).exp(),
                q.v[n - 1] + omega * (tau - q.t_hi()),
            )
        } else {
            (cubic(&q.u, x), cubic(&q.v, x))
        };
        (u + self.shift_u, v + self.shift_v)
    }
}

fn cubic(w: &[f64], x: f64) -> f64 {
    let n = w.len();
    let i = (x.floor() as usize).min(n - 2);
    let s = x - i as f64;
    if s == 0.0 {
        return w[i];
    }
    let wm = if i > 0 { w[i - 1] } else { 2.0 * w[0] - w[1] };
    let wp = if i + 2 < n {
        w[i + 2]
    } else {
        2.0 * w[n - 1] - w[n - 2]
    };
    let (w0, w1) = (w[i], w[i + 1]);
    let m0 = 0.5 * (w1 - wm);
    let m1 = 0.5 * (wp - w0);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * w0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * w1
        + (s3 - s2) * m1
}

/// Evaluator of the blended orbit `q⁰(t)`; exact at the jump times.
pub struct Q0Evaluator<'a> {
    plan: &'a JumpPlan,
    pieces: Vec<PieceEval<'a>>,
}

impl<'a> Q0Evaluator<'a> {
    pub fn new(
        params: &SystemParams,
        plan: &'a JumpPlan,
        heteroclinics: &'a [MinimizerCurve],
    ) -> Result<Self> {
        if heteroclinics.len() != plan.jumps() {
            return Err(Error::invalid_input(
                "one heteroclinic per jump is required",
            ));
        }
        let rate = (params.epsilon * (1.0 - params.mu)).sqrt();
        let pieces = heteroclinics
            .iter()
            .enumerate()
            .map(|(k, h)| PieceEval {
                curve: h,
                shift_t: plan.t_tilde[k] - plan.anchors[k].0,
                shift_u: TAU * k as f64,
                shift_v: plan.v_tilde[k] - plan.anchors[k].1,
                tail_rate: rate,
            })
            .collect();
        Ok(Q0Evaluator { plan, pieces })
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let tt = &self.plan.t_tilde;
        let jumps = tt.len();
        if t <= tt[0] || jumps == 1 {
            if t >= *tt.last().unwrap() {
                return self.pieces[jumps - 1].eval(t);
            }
            return self.pieces[0].eval(t);
        }
        if t >= tt[jumps - 1] {
            return self.pieces[jumps - 1].eval(t);
        }
        // t in (T~_{k-1}, T~_k).
        let k = tt.partition_point(|&x| x < t);
        let (a, b) = (tt[k - 1] + self.plan.l, tt[k] - self.plan.l);
        let (pm, pp) = smoothstep(a, b, t).expect("plan spacing guarantees a < b");
        if pm == 1.0 {
            return self.pieces[k - 1].eval(t);
        }
        if pp == 1.0 {
            return self.pieces[k].eval(t);
        }
        let (u0, v0) = self.pieces[k - 1].eval(t);
        let (u1, v1) = self.pieces[k].eval(t);
        (pm * u0 + pp * u1, pm * v0 + pp * v1)
    }
}

/// Options for sampling `q⁰`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Q0Options {
    pub dt: f64,
    /// Padding beyond the first/last jump; `None` selects
    /// `max(L, 30/√ε)` so the clamped tails sit below 1e−6.
    pub pad: Option<f64>,
}

impl Default for Q0Options {
    fn default() -> Self {
        Q0Options {
            dt: 0.02,
            pad: None,
        }
    }
}

/// Sample the approximate shadowing orbit on the full truncated window, with
/// clamped-to-torus ends.
pub fn build_q0(
    params: &SystemParams,
    plan: &JumpPlan,
    heteroclinics: &[MinimizerCurve],
    opts: &Q0Options,
) -> Result<Trajectory> {
    let eval = Q0Evaluator::new(params, plan, heteroclinics)?;
    let pad = opts
        .pad
        .unwrap_or_else(|| plan.l.max(30.0 / params.epsilon.sqrt()));
    let t_lo = plan.t_tilde[0] - pad;
    let t_hi = plan.t_tilde[plan.jumps() - 1] + pad;
    let n = ((t_hi - t_lo) / opts.dt).ceil() as usize + 1;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let t = t_lo + opts.dt * i as f64;
        let (ui, vi) = eval.eval(t);
        u.push(ui);
        v.push(vi);
    }
    // Snap the outermost nodes onto the exact asymptotes; the tails are
    // below the clamp tolerance there, so this changes nothing measurable.
    let last = n - 1;
    u[0] = 0.0;
    u[last] = TAU * plan.jumps() as f64;
    let bc = (
        BoundaryCondition::ClampedToTorus {
            k: 0,
            omega: plan.omegas[0],
        },
        BoundaryCondition::ClampedToTorus {
            k: plan.jumps() as i64,
            omega: plan.omegas[plan.jumps()],
        },
    );
    let q = Trajectory::new(t_lo, opts.dt, u, v, bc)?;
    q.validate_clamps()?;
    Ok(q)
}

/// A Bernoulli-sequence itinerary: jumps exactly at the zeros of `bits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliPlan {
    pub bits: Vec<u8>,
    pub first_index: i64,
    pub omega: f64,
    /// The jump quantum: a jump sits at `4L·k` for each zero position `k`.
    pub l: f64,
    pub jump_positions: Vec<i64>,
    /// `2π·log 2 / (4L)`.
    pub entropy_rate: f64,
}

/// Expand a 0/1 sequence into a constant-speed jump plan: position `k`
/// carries a jump at `4L·k` exactly when `bits[k] = 0`.
pub fn bernoulli_plan(
    bits: &[u8],
    first_index: i64,
    omega: f64,
    l: f64,
) -> Result<(BernoulliPlan, PlanSpec)> {
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid_input("bits must be 0 or 1"));
    }
    let rem = (l / TAU - (l / TAU).round()).abs();
    if rem > 1e-9 || l <= 0.0 {
        return Err(Error::invalid_input(format!(
            "L = {l} must be a positive multiple of 2*pi"
        )));
    }
    let positions: Vec<i64> = bits
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b == 0)
        .map(|(i, _)| first_index + i as i64)
        .collect();
    if positions.len() < 2 {
        return Err(Error::invalid_input(
            "need at least two zeros to define a plan",
        ));
    }
    let plan = BernoulliPlan {
        bits: bits.to_vec(),
        first_index,
        omega,
        l,
        jump_positions: positions.clone(),
        entropy_rate: TAU * std::f64::consts::LN_2 / (4.0 * l),
    };
    let l_tilde: Vec<f64> = positions.iter().map(|&k| 4.0 * l * k as f64).collect();
    let spec = PlanSpec {
        omegas: vec![omega; positions.len() + 1],
        l_tilde,
        l: None,
    };
    Ok((plan, spec))
}

/// Evenly-stepped ramp itinerary `ω⁻ → ω⁺` with per-jump steps below
/// `max_step`, nominal spacing `spacing` (a multiple of 2π).
pub fn ramp_plan(
    omega_minus: f64,
    omega_plus: f64,
    max_step: f64,
    spacing: f64,
) -> Result<PlanSpec> {
    if !(max_step > 0.0) {
        return Err(Error::invalid_input("max_step must be positive"));
    }
    if omega_plus < omega_minus {
        return Err(Error::invalid_input(
            "ramp requires omega_minus <= omega_plus",
        ));
    }
    let jumps = (((omega_plus - omega_minus) / max_step).ceil() as usize).max(1);
    let omegas: Vec<f64> = (0..=jumps)
        .map(|i| omega_minus + (omega_plus - omega_minus) * i as f64 / jumps as f64)
        .collect();
    let l_tilde: Vec<f64> = (0..jumps).map(|k| spacing * k as f64).collect();
    Ok(PlanSpec {
        omegas,
        l_tilde,
        l: None,
    })
}

/// Policy inputs for [`validate_plan`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanPolicy {
    /// Measured Lipschitz constant of `S⁺` in `ω` (stands in for `c₄`).
    pub c4_measured: f64,
    /// Safety factor on the measured constant.
    pub safety: f64,
    /// Coupling strength, entering the step bound through `R ∨ μ`.
    pub mu: f64,
    /// Dissipation floor `Δ₁`, when a measurement is available.
    pub delta1: Option<f64>,
    /// Coefficient of the advisory `L ≥ c₁₄ ϖ⁵ |log Δ₁|/Δ₁` bound.
    pub c14: f64,
}

impl Default for PlanPolicy {
    fn default() -> Self {
        PlanPolicy {
            c4_measured: 1.0,
            safety: 4.0,
            mu: 0.0,
            delta1: None,
            c14: 1.0,
        }
    }
}

/// Validation report; hard rule violations abort instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanValidation {
    pub pass: bool,
    pub omega_step_bound: f64,
    pub warnings: Vec<String>,
}

/// Check the spacing and mod-2π rules exactly (hard), and the `ω`-step and
/// minimal-`L` policies (warnings).
pub fn validate_plan(plan: &JumpPlan, policy: &PlanPolicy) -> Result<PlanValidation> {
    for (k, &lt) in plan.l_tilde.iter().enumerate() {
        let rem = (lt / TAU - (lt / TAU).round()).abs() * TAU;
        if rem > 1e-9 {
            return Err(Error::invalid_input(format!(
                "nominal jump time {lt} at k = {k} is not a multiple of 2*pi (defect {rem})"
            )));
        }
    }
    for w in plan.l_tilde.windows(2) {
        if w[1] - w[0] < 4.0 * plan.l + TAU - 1e-9 {
            return Err(Error::invalid_input(format!(
                "nominal spacing {} is below 4L + 2*pi = {}",
                w[1] - w[0],
                4.0 * plan.l + TAU
            )));
        }
    }
    for (k, (&tt, &lt)) in plan.t_tilde.iter().zip(&plan.l_tilde).enumerate() {
        if !(tt - lt > -std::f64::consts::PI - 1e-9 && tt - lt <= std::f64::consts::PI + 1e-9) {
            return Err(Error::invalid_input(format!(
                "jump time T~_{k} = {tt} is not within (-pi, pi] of its nominal time {lt}"
            )));
        }
    }
    let mut warnings = Vec::new();
    let r_or_mu = plan.r.max(policy.mu);
    let bound = if plan.delta0 > 0.0 && r_or_mu > 0.0 {
        plan.delta0 / (4.0 * policy.c4_measured * policy.safety * r_or_mu * plan.varpi)
    } else {
        f64::INFINITY
    };
    for (k, w) in plan.omegas.windows(2).enumerate() {
        let step = (w[1] - w[0]).abs();
        if step > bound {
            warnings.push(format!(
                "omega step {step} at jump {k} exceeds the policy bound {bound}"
            ));
        }
    }
    if let Some(d1) = policy.delta1 {
        if d1 > 0.0 {
            let l_min = policy.c14 * plan.varpi.powi(5) * d1.ln().abs() / d1;
            if plan.l < l_min {
                warnings.push(format!(
                    "L = {} is below the advisory dissipation bound {l_min}",
                    plan.l
                ));
            }
        }
    }
    Ok(PlanValidation {
        pass: true,
        omega_step_bound: bound,
        warnings,
    })
}
