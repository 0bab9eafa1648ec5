//! The formally gradient dynamics `q_s = q_tt − ∇V(q, t)` on truncated
//! domains: grid trajectories, a semi-implicit stepper, relaxation loops,
//! and the uniformly-local / localized norms.
//!
//! The evolution variable is the relaxation time `s`; equilibria of the flow
//! are exactly the solutions of the Euler–Lagrange equations. The diffusion
//! term is treated implicitly (one tridiagonal solve per component per step),
//! the potential term explicitly, which removes the `Δs ≤ Δt²/2` stiffness
//! limit; the stability policy is `Δs ≤ 1/(2·Lip(∇V))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, SystemParams};

/// Boundary treatment at one end of a truncated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Pin `u` to `2kπ` and `v` to the linear ramp of speed `omega`; the
    /// stepper holds the end node fixed. Construction validates that the
    /// sampled values actually sit on the declared asymptote.
    ClampedToTorus { k: i64, omega: f64 },
    /// Hold the end node fixed at whatever value it carries, with no torus
    /// validation.
    Pinned,
    /// Let the end node evolve (one-sided stencil in `rhs`, linear-
    /// extrapolation ghost in `step`). Provided for experiments.
    Free,
}

impl BoundaryCondition {
    pub fn is_fixed(&self) -> bool {
        !matches!(self, BoundaryCondition::Free)
    }
}

/// A grid-sampled curve `q = (u, v)` on a truncated, uniform `t`-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t_lo: f64,
    pub dt: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub bc: (BoundaryCondition, BoundaryCondition),
}

impl Trajectory {
    pub fn new(
        t_lo: f64,
        dt: f64,
        u: Vec<f64>,
        v: Vec<f64>,
        bc: (BoundaryCondition, BoundaryCondition),
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid_input("grid spacing must be positive"));
        }
        if u.len() != v.len() {
            return Err(Error::invalid_input(
                "u and v arrays must have equal length",
            ));
        }
        if u.len() < 3 {
            return Err(Error::invalid_input(
                "trajectory needs at least 3 grid points",
            ));
        }
        Ok(Trajectory { t_lo, dt, u, v, bc })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_lo + self.dt * i as f64
    }

    pub fn t_hi(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Index of the grid node nearest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = ((t - self.t_lo) / self.dt).round();
        (i.max(0.0) as usize).min(self.len() - 1)
    }

    /// Linear interpolation of `u` at an arbitrary `t` inside the window.
    pub fn u_at(&self, t: f64) -> f64 {
        interp(&self.u, self.t_lo, self.dt, t)
    }

    /// Linear interpolation of `v` at an arbitrary `t` inside the window.
    pub fn v_at(&self, t: f64) -> f64 {
        interp(&self.v, self.t_lo, self.dt, t)
    }

    /// Centered first derivative at the nodes (one-sided at the ends).
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (values[i + 1] - values[i - 1]) / (2.0 * self.dt);
        }
        d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * self.dt);
        d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * self.dt);
        d
    }

    /// Check that clamped ends sit on their declared asymptotes.
    pub fn validate_clamps(&self) -> Result<()> {
        let n = self.len();
        let tol = 1e-6;
        for (end, idx, inner) in [(self.bc.0, 0usize, 1usize), (self.bc.1, n - 1, n - 2)] {
            if let BoundaryCondition::ClampedToTorus { k, omega } = end {
                let target_u = crate::TAU * k as f64;
                if (self.u[idx] - target_u).abs() > tol {
                    return Err(Error::invalid_input(format!(
                        "clamped end at t = {}: u = {} is not within {tol} of 2*pi*{k}",
                        self.time(idx),
                        self.u[idx]
                    )));
                }
                // Signed one-cell slope pointing into the grid.
                let slope = if idx == 0 {
                    (self.v[inner] - self.v[idx]) / self.dt
                } else {
                    (self.v[idx] - self.v[inner]) / self.dt
                };
                if (slope - omega).abs() > 1e-5 {
                    return Err(Error::invalid_input(format!(
                        "clamped end at t = {}: v-slope {slope} is not the declared ramp speed {omega}",
                        self.time(idx)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn interp(values: &[f64], t_lo: f64, dt: f64, t: f64) -> f64 {
    let n = values.len();
    let x = (t - t_lo) / dt;
    if x <= 0.0 {
        return values[0];
    }
    if x >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i = x.floor() as usize;
    let frac = x - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// State of one relaxation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowState {
    pub q: Trajectory,
    pub s: f64,
    pub step_count: u64,
    pub last_rhs_norm: f64,
}

impl FlowState {
    pub fn new(q: Trajectory) -> Self {
        FlowState {
            q,
            s: 0.0,
            step_count: 0,
            last_rhs_norm: f64::NAN,
        }
    }
}

/// The right-hand side `q_s = q_tt − ∇V(q, t)` as a trajectory-shaped field.
///
/// Interior nodes use the centered stencil; clamped/pinned ends report zero
/// (they do not move), free ends use the second-order one-sided stencil.
pub fn rhs(params: &SystemParams, q: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let dt2 = q.dt * q.dt;
    let mut fu = vec![0.0; n];
    let mut fv = vec![0.0; n];
    for i in 1..n - 1 {
        let t = q.time(i);
        let (vu, vv) = model::grad_potential(params, q.u[i], q.v[i], t);
        fu[i] = (q.u[i + 1] - 2.0 * q.u[i] + q.u[i - 1]) / dt2 - vu;
        fv[i] = (q.v[i + 1] - 2.0 * q.v[i] + q.v[i - 1]) / dt2 - vv;
    }
    let one_sided = |w: &[f64], at_start: bool| -> f64 {
        if at_start {
            (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / dt2
        } else {
            (2.0 * w[n - 1] - 5.0 * w[n - 2] + 4.0 * w[n - 3] - w[n - 4]) / dt2
        }
    };
    if q.bc.0 == BoundaryCondition::Free && n >= 4 {
        let t = q.time(0);
        let (vu, vv) = model::grad_potential(params, q.u[0], q.v[0], t);
        fu[0] = one_sided(&q.u, true) - vu;
        fv[0] = one_sided(&q.v, true) - vv;
    }
    if q.bc.1 == BoundaryCondition::Free && n >= 4 {
        let t = q.time(n - 1);
        let (vu, vv) = model::grad_potential(params, q.u[n - 1], q.v[n - 1], t);
        fu[n - 1] = one_sided(&q.u, false) - vu;
        fv[n - 1] = one_sided(&q.v, false) - vv;
    }
    (fu, fv)
}

/// Solve `(I − ds·D²) x = b` with the boundary rows dictated by the BCs.
/// Fixed ends contribute identity rows; free ends use a zero-curvature ghost
/// (`q_tt = 0` at the node), which also reduces to an identity-like row.
fn implicit_diffusion_solve(
    b: &[f64],
    dt: f64,
    ds: f64,
    bc: (BoundaryCondition, BoundaryCondition),
) -> Vec<f64> {
    let n = b.len();
    let r = ds / (dt * dt);
    // Thomas algorithm over rows: a x_{i-1} + c x_i + e x_{i+1} = b_i.
    let mut diag = vec![1.0 + 2.0 * r; n];
    let mut lower = vec![-r; n];
    let mut upper = vec![-r; n];
    diag[0] = 1.0;
    upper[0] = 0.0;
    diag[n - 1] = 1.0;
    lower[n - 1] = 0.0;
    let _ = bc; // both fixed and free ends reduce to identity rows here
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = upper[0] / diag[0];
    dp[0] = b[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * cp[i - 1];
        cp[i] = upper[i] / m;
        dp[i] = (b[i] - lower[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Advance one semi-implicit step of size `ds`.
pub fn step(params: &SystemParams, state: &FlowState, ds: f64) -> Result<FlowState> {
    if !(ds > 0.0) {
        return Err(Error::invalid_input("step size must be positive"));
    }
    let q = &state.q;
    let n = q.len();
    let mut bu = Vec::with_capacity(n);
    let mut bv = Vec::with_capacity(n);
    for i in 0..n {
        let t = q.time(i);
        let (vu, vv) = model::grad_potential(params, q.u[i], q.v[i], t);
        bu.push(q.u[i] - ds * vu);
        bv.push(q.v[i] - ds * vv);
    }
    // Fixed ends keep their values exactly; free ends get the explicit
    // potential kick with zero curvature.
    if q.bc.0.is_fixed() {
        bu[0] = q.u[0];
        bv[0] = q.v[0];
    }
    if q.bc.1.is_fixed() {
        bu[n - 1] = q.u[n - 1];
        bv[n - 1] = q.v[n - 1];
    }
    let u_new = implicit_diffusion_solve(&bu, q.dt, ds, q.bc);
    let v_new = implicit_diffusion_solve(&bv, q.dt, ds, q.bc);
    for w in u_new.iter().chain(v_new.iter()) {
        if !w.is_finite() {
            return Err(Error::internal(
                "tridiagonal solve produced a non-finite value",
            ));
        }
    }
    let q_new = Trajectory {
        t_lo: q.t_lo,
        dt: q.dt,
        u: u_new,
        v: v_new,
        bc: q.bc,
    };
    Ok(FlowState {
        q: q_new,
        s: state.s + ds,
        step_count: state.step_count + 1,
        last_rhs_norm: state.last_rhs_norm,
    })
}

/// Localized norm `(∫ e^{−|t|} (q² + q_t²) dt)^{1/2}` by weighted trapezoid.
pub fn loc_norm(q: &Trajectory) -> f64 {
    let du = q.derivative(&q.u);
    let dv = q.derivative(&q.v);
    let n = q.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = (-q.time(i).abs()).exp();
        let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += cell * w * (q.u[i] * q.u[i] + q.v[i] * q.v[i] + du[i] * du[i] + dv[i] * dv[i]);
    }
    (acc * q.dt).sqrt()
}

/// Localized norm of an arbitrary trajectory-shaped pair of fields.
pub fn loc_norm_of(q: &Trajectory, fu: &[f64], fv: &[f64]) -> f64 {
    let n = q.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = (-q.time(i).abs()).exp();
        let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += cell * w * (fu[i] * fu[i] + fv[i] * fv[i]);
    }
    (acc * q.dt).sqrt()
}

/// `sup_y ∫ e^{−|t+y|} ρ(t) dt` over grid translates for a nonnegative
/// density `ρ`, evaluated in O(n) with two exponential recursions.
fn ul_sup_of_density(dt: f64, rho: &[f64]) -> f64 {
    let n = rho.len();
    let a = (-dt).exp();
    // fwd[j] = sum_{i<=j} e^{-(t_j - t_i)} rho_i dt,  bwd[j] analogous.
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut acc = 0.0;
    for j in 0..n {
        acc = acc * a + rho[j] * dt;
        fwd[j] = acc;
    }
    acc = 0.0;
    for j in (0..n).rev() {
        acc = acc * a + rho[j] * dt;
        bwd[j] = acc;
    }
    let mut best = 0.0f64;
    for j in 0..n {
        // Both recursions count the node j itself once each.
        let val = fwd[j] + bwd[j] - rho[j] * dt;
        best = best.max(val);
    }
    best
}

/// Uniformly-local norm `(q(0)² + ‖q_t‖²_{H¹_ul})^{1/2}`, with the sup over
/// translates taken over grid shifts and the `H¹` density integrated jointly
/// (`sup_y ∫ e^{−|t+y|} (q_t² + q_tt²) dt`).
pub fn ul_norm(q: &Trajectory) -> f64 {
    let i0 = q.nearest_index(0.0);
    let q0_sq = q.u[i0] * q.u[i0] + q.v[i0] * q.v[i0];
    let du = q.derivative(&q.u);
    let dv = q.derivative(&q.v);
    let ddu = q.derivative(&du);
    let ddv = q.derivative(&dv);
    let rho: Vec<f64> = (0..q.len())
        .map(|i| du[i] * du[i] + dv[i] * dv[i] + ddu[i] * ddu[i] + ddv[i] * ddv[i])
        .collect();
    (q0_sq + ul_sup_of_density(q.dt, &rho)).sqrt()
}

/// Uniformly-local norm of a trajectory-shaped field (no derivative terms).
pub fn ul_norm_of(q: &Trajectory, fu: &[f64], fv: &[f64]) -> f64 {
    let rho: Vec<f64> = (0..q.len())
        .map(|i| fu[i] * fu[i] + fv[i] * fv[i])
        .collect();
    ul_sup_of_density(q.dt, &rho).sqrt()
}

/// Weighted action `E_δ = ∫ e^{−δ|t|} L_ω(q, q_t, t) dt`.
pub fn weighted_action(params: &SystemParams, omega: f64, q: &Trajectory, delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    let du = q.derivative(&q.u);
    let dv = q.derivative(&q.v);
    let n = q.len();
    let mut acc = 0.0;
    for i in 0..n {
        let t = q.time(i);
        let w = (-delta * t.abs()).exp();
        let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += cell * w * model::lagrangian_density(params, omega, q.u[i], q.v[i], du[i], dv[i], t);
    }
    acc * q.dt
}

/// Weighted dissipation `D_δ = ∫ e^{−δ|t|} q_s² dt` with `q_s` from [`rhs`].
pub fn weighted_dissipation(params: &SystemParams, q: &Trajectory, delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    let (fu, fv) = rhs(params, q);
    let n = q.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = (-delta * q.time(i).abs()).exp();
        let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += cell * w * (fu[i] * fu[i] + fv[i] * fv[i]);
    }
    acc * q.dt
}

/// Total discrete action `Σ Δt [ (Δq/Δt)²/2 + V ]` over the window (plain
/// Lagrangian, `ω = 0` adjustment handled by callers when needed).
pub fn discrete_action(params: &SystemParams, omega: f64, q: &Trajectory) -> f64 {
    let n = q.len();
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let du = (q.u[i + 1] - q.u[i]) / q.dt;
        let dv = (q.v[i + 1] - q.v[i]) / q.dt;
        acc += q.dt * (0.5 * du * du + 0.5 * (dv - omega) * (dv - omega));
    }
    for i in 0..n {
        let cell = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += cell * q.dt * model::potential(params, q.u[i], q.v[i], q.time(i));
    }
    acc
}

/// Translate `φ^y q(t) = q(t + y)` for a grid-aligned `y`: samples shift
/// within the fixed window; vacated nodes continue the nearest surviving
/// sample's asymptote (constant `u`, linear `v` at the clamp speed).
pub fn translate(q: &Trajectory, y: f64) -> Result<Trajectory> {
    let shift = y / q.dt;
    let m = shift.round();
    if (shift - m).abs() > 1e-9 {
        return Err(Error::invalid_input(format!(
            "translation {y} is not a multiple of the grid spacing {}",
            q.dt
        )));
    }
    let m = m as i64;
    let n = q.len() as i64;
    let omega_of = |bc: BoundaryCondition| match bc {
        BoundaryCondition::ClampedToTorus { omega, .. } => omega,
        _ => 0.0,
    };
    let mut u = vec![0.0; q.len()];
    let mut v = vec![0.0; q.len()];
    for i in 0..n {
        let j = i + m;
        if j < 0 {
            let om = omega_of(q.bc.0);
            u[i as usize] = q.u[0];
            v[i as usize] = q.v[0] + om * (j as f64) * q.dt;
        } else if j >= n {
            let om = omega_of(q.bc.1);
            u[i as usize] = q.u[(n - 1) as usize];
            v[i as usize] = q.v[(n - 1) as usize] + om * ((j - n + 1) as f64) * q.dt;
        } else {
            u[i as usize] = q.u[j as usize];
            v[i as usize] = q.v[j as usize];
        }
    }
    Ok(Trajectory {
        t_lo: q.t_lo,
        dt: q.dt,
        u,
        v,
        bc: q.bc,
    })
}

/// `‖step(translate(q)) − translate(step(q))‖_loc`; expected ≈ 0 away from
/// boundaries when the shift respects the potential's 2π-periodicity.
pub fn commutation_check(params: &SystemParams, q: &Trajectory, y: f64, ds: f64) -> Result<f64> {
    let shifted = translate(q, y)?;
    let a = step(params, &FlowState::new(shifted), ds)?;
    let stepped = step(params, &FlowState::new(q.clone()), ds)?;
    let b = translate(&stepped.q, y)?;
    let n = q.len();
    let du: Vec<f64> = (0..n).map(|i| a.q.u[i] - b.u[i]).collect();
    let dv: Vec<f64> = (0..n).map(|i| a.q.v[i] - b.v[i]).collect();
    Ok(loc_norm_of(q, &du, &dv))
}

/// Options for [`relax`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxOptions {
    /// Step size; `None` selects `1/(2·Lip(∇V))` from the coefficient bounds.
    pub ds: Option<f64>,
    /// Convergence tolerance on the localized norm of the right-hand side.
    pub tol: f64,
    /// Stop once `s` exceeds this.
    pub s_max: f64,
    /// Hard cap on the number of steps.
    pub max_steps: u64,
    /// Record the norm trace every this many steps.
    pub trace_every: u64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            ds: None,
            tol: 1e-6,
            s_max: 1e6,
            max_steps: 1_000_000,
            trace_every: 100,
        }
    }
}

/// One row of the relaxation norm trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub s: f64,
    pub ul_rhs: f64,
    pub loc_rhs: f64,
    pub action: f64,
}

/// Certificate attached to a finished relaxation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub converged: bool,
    pub el_residual_sup: f64,
    pub loc_rhs: f64,
    pub trace: Vec<TraceRow>,
}

/// Stability-policy step size `1/(2·Lip(∇V))`.
pub fn default_ds(params: &SystemParams) -> f64 {
    0.5 / params.grad_potential_lipschitz()
}

/// Iterate [`step`] until the localized norm of the right-hand side drops
/// below `tol` or the budget runs out. Reaching the budget is not an error;
/// the certificate is returned flagged not-converged.
pub fn relax(
    params: &SystemParams,
    q0: Trajectory,
    opts: &RelaxOptions,
) -> Result<(FlowState, EquilibriumCertificate)> {
    q0.validate_clamps()?;
    let ds = opts.ds.unwrap_or_else(|| default_ds(params));
    let omega_trace = match q0.bc.0 {
        BoundaryCondition::ClampedToTorus { omega, .. } => omega,
        _ => 0.0,
    };
    let mut state = FlowState::new(q0);
    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        let (fu, fv) = rhs(params, &state.q);
        let loc = loc_norm_of(&state.q, &fu, &fv);
        state.last_rhs_norm = loc;
        if state.step_count % opts.trace_every == 0 {
            trace.push(TraceRow {
                s: state.s,
                ul_rhs: ul_norm_of(&state.q, &fu, &fv),
                loc_rhs: loc,
                action: discrete_action(params, omega_trace, &state.q),
            });
        }
        if loc <= opts.tol {
            converged = true;
            break;
        }
        if state.s >= opts.s_max || state.step_count >= opts.max_steps {
            break;
        }
        state = step(params, &state, ds)?;
    }
    let res = model::el_residual(params, &state.q)?;
    let cert = EquilibriumCertificate {
        converged,
        el_residual_sup: res.sup_norm(),
        loc_rhs: state.last_rhs_norm,
        trace,
    };
    Ok((state, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CouplingFunction;
    use crate::separatrix::separatrix_u;

    fn arnold(epsilon: f64, mu: f64) -> SystemParams {
        SystemParams::new(epsilon, mu, CouplingFunction::arnold()).unwrap()
    }

    fn torus_traj(omega: f64, n: usize, dt: f64) -> Trajectory {
        let t_lo = -dt * (n as f64 - 1.0) / 2.0;
        let u = vec![0.0; n];
        let v: Vec<f64> = (0..n).map(|i| omega * (t_lo + dt * i as f64)).collect();
        Trajectory::new(
            t_lo,
            dt,
            u,
            v,
            (
                BoundaryCondition::ClampedToTorus { k: 0, omega },
                BoundaryCondition::ClampedToTorus { k: 0, omega },
            ),
        )
        .unwrap()
    }

    #[test]
    fn rhs_vanishes_on_invariant_torus() {
        let p = arnold(0.64, 0.04);
        let q = torus_traj(1.1, 401, 0.05);
        let (fu, fv) = rhs(&p, &q);
        let sup = fu
            .iter()
            .chain(fv.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        // The second difference of the linear ramp cancels to rounding,
        // which the 1/dt² amplifies.
        assert!(sup < 1e-10, "sup rhs on torus {sup}");
    }

    #[test]
    fn rhs_small_on_separatrix() {
        let p = arnold(1.0, 0.0);
        let dt = 1e-3;
        let n = 16001;
        let t_lo = -(n as f64 - 1.0) / 2.0 * dt;
        let u: Vec<f64> = (0..n)
            .map(|i| separatrix_u(1.0, t_lo + dt * i as f64))
            .collect();
        let v = vec![0.0; n];
        let q = Trajectory::new(
            t_lo,
            dt,
            u,
            v,
            (BoundaryCondition::Pinned, BoundaryCondition::Pinned),
        )
        .unwrap();
        let (fu, fv) = rhs(&p, &q);
        let sup = (1..n - 1).fold(0.0f64, |m, i| m.max(fu[i].abs()).max(fv[i].abs()));
        assert!(sup <= 1e-4, "sup rhs on separatrix {sup}");
    }

    #[test]
    fn rhs_is_minus_gradient_of_discrete_action() {
        // rhs equals -(d/dq_i of the discrete action)/dt at interior nodes.
        let p = arnold(0.8, 0.05);
        let n = 41;
        let dt = 0.1;
        let t_lo = -2.0;
        let u: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin() + 1.0).collect();
        let v: Vec<f64> = (0..n).map(|i| 0.5 * (0.2 * i as f64).cos()).collect();
        let q = Trajectory::new(
            t_lo,
            dt,
            u,
            v,
            (BoundaryCondition::Pinned, BoundaryCondition::Pinned),
        )
        .unwrap();
        let (fu, fv) = rhs(&p, &q);
        let h = 1e-6;
        for i in [1usize, 7, 20, n - 2] {
            for comp in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                if comp == 0 {
                    qp.u[i] += h;
                    qm.u[i] -= h;
                } else {
                    qp.v[i] += h;
                    qm.v[i] -= h;
                }
                let da =
                    (discrete_action(&p, 0.0, &qp) - discrete_action(&p, 0.0, &qm)) / (2.0 * h);
                let want = -da / dt;
                let got = if comp == 0 { fu[i] } else { fv[i] };
                assert!(
                    (got - want).abs() < 1e-7,
                    "node {i} comp {comp}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn equilibrium_is_fixed_point_of_step() {
        let p = arnold(0.64, 0.04);
        let q = torus_traj(0.9, 201, 0.05);
        let s0 = FlowState::new(q.clone());
        let s1 = step(&p, &s0, 0.3).unwrap();
        let sup = (0..q.len()).fold(0.0f64, |m, i| {
            m.max((s1.q.u[i] - q.u[i]).abs())
                .max((s1.q.v[i] - q.v[i]).abs())
        });
        assert!(sup < 1e-12, "fixed point moved by {sup}");
    }

    #[test]
    fn torus_perturbation_decays_monotonically() {
        let p = arnold(1.0, 0.0);
        let mut q = torus_traj(0.7, 401, 0.05);
        let n = q.len();
        for i in 1..n - 1 {
            let t = q.time(i);
            q.v[i] += 0.05 * (-t * t / 8.0).exp();
        }
        let base: Vec<f64> = (0..n).map(|i| 0.7 * q.time(i)).collect();
        let mut state = FlowState::new(q);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            state = step(&p, &state, 0.2).unwrap();
            let sup = (0..n).fold(0.0f64, |m, i| m.max((state.q.v[i] - base[i]).abs()));
            assert!(sup <= prev + 1e-13, "sup grew: {sup} > {prev}");
            prev = sup;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn splitting_error_is_first_order() {
        let p = arnold(0.64, 0.04);
        let mut q = torus_traj(0.8, 201, 0.1);
        let n = q.len();
        for i in 1..n - 1 {
            let t = q.time(i);
            q.u[i] += 0.3 * (-t * t / 4.0).exp();
        }
        let err = |ds: f64| {
            let one = step(&p, &FlowState::new(q.clone()), ds).unwrap();
            let half = step(&p, &FlowState::new(q.clone()), ds / 2.0).unwrap();
            let two = step(&p, &half, ds / 2.0).unwrap();
            (0..n).fold(0.0f64, |m, i| {
                m.max((one.q.u[i] - two.q.u[i]).abs())
                    .max((one.q.v[i] - two.q.v[i]).abs())
            })
        };
        let e1 = err(0.2);
        let e2 = err(0.1);
        let ratio = e1 / e2;
        assert!(
            ratio > 3.0 && ratio < 5.0,
            "O(ds^2) one-step defect ratio {ratio}"
        );
    }

    #[test]
    fn norms_vanish_on_zero() {
        let q = Trajectory::new(
            -5.0,
            0.1,
            vec![0.0; 101],
            vec![0.0; 101],
            (BoundaryCondition::Free, BoundaryCondition::Free),
        )
        .unwrap();
        assert_eq!(loc_norm(&q), 0.0);
        assert_eq!(ul_norm(&q), 0.0);
    }

    #[test]
    fn ul_norm_of_sine_matches_closed_form() {
        // q = (sin t, 0): q(0) = 0 and cos² + sin² = 1, so the H¹_ul part is
        // ∫ e^{-|t|} dt = 2 and the norm is √2.
        let n = 12001;
        let dt = 0.01;
        let t_lo = -(n as f64 - 1.0) / 2.0 * dt;
        let u: Vec<f64> = (0..n).map(|i| (t_lo + dt * i as f64).sin()).collect();
        let v = vec![0.0; n];
        let q = Trajectory::new(
            t_lo,
            dt,
            u,
            v,
            (BoundaryCondition::Free, BoundaryCondition::Free),
        )
        .unwrap();
        let val = ul_norm(&q);
        assert!((val - 2.0f64.sqrt()).abs() < 5e-3, "ul norm {val}");
    }

    #[test]
    fn loc_norm_stable_under_refinement() {
        let make = |dt: f64| {
            let n = (20.0 / dt) as usize + 1;
            let t_lo = -10.0;
            let u: Vec<f64> = (0..n)
                .map(|i| ((t_lo + dt * i as f64) * 0.7).sin())
                .collect();
            let v: Vec<f64> = (0..n)
                .map(|i| ((t_lo + dt * i as f64) * 0.3).cos())
                .collect();
            Trajectory::new(
                t_lo,
                dt,
                u,
                v,
                (BoundaryCondition::Free, BoundaryCondition::Free),
            )
            .unwrap()
        };
        let a = loc_norm(&make(0.02));
        let b = loc_norm(&make(0.01));
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn weighted_functionals_vanish_on_torus() {
        let p = arnold(0.64, 0.04);
        let omega = 1.2;
        let q = torus_traj(omega, 801, 0.05);
        let e = weighted_action(&p, omega, &q, 0.3);
        let d = weighted_dissipation(&p, &q, 0.3);
        assert!(e.abs() < 1e-10, "E_delta on torus {e}");
        assert!(d.abs() < 1e-18, "D_delta on torus {d}");
    }

    #[test]
    fn dissipation_nonnegative() {
        let p = arnold(0.8, 0.05);
        let mut q = torus_traj(0.6, 201, 0.1);
        for i in 0..q.len() {
            q.u[i] += 0.1 * (i as f64 * 0.3).sin();
        }
        assert!(weighted_dissipation(&p, &q, 0.5) >= 0.0);
    }

    #[test]
    fn translate_identity_and_commutation() {
        let p = arnold(0.64, 0.04);
        let omega = 0.9;
        // Long window so the boundary effects are exponentially suppressed
        // near t = 0 where the loc norm concentrates.
        let n = 4001;
        let dt = crate::TAU / 64.0;
        let mut q = torus_traj(omega, n, dt);
        for i in 0..n {
            let t = q.time(i);
            q.u[i] += 0.2 * (-(t * t) / 30.0).exp();
        }
        let d0 = commutation_check(&p, &q, 0.0, 0.2).unwrap();
        assert_eq!(d0, 0.0);
        let d = commutation_check(&p, &q, crate::TAU, 0.2).unwrap();
        assert!(d <= 1e-10, "commutation defect {d}");
        // Non-aligned shift is rejected.
        assert!(translate(&q, dt * 0.5).is_err());
    }

    #[test]
    fn relax_on_equilibrium_converges_immediately() {
        let p = arnold(0.64, 0.04);
        let q = torus_traj(1.0, 201, 0.05);
        let opts = RelaxOptions {
            tol: 1e-8,
            ..Default::default()
        };
        let (state, cert) = relax(&p, q, &opts).unwrap();
        assert!(cert.converged);
        assert_eq!(state.step_count, 0);
        assert_eq!(state.s, 0.0);
    }

    #[test]
    fn relax_returns_to_separatrix_translate_at_mu_zero() {
        let p = arnold(1.0, 0.0);
        let dt = 0.02;
        let n = 3001;
        let t_lo = -(n as f64 - 1.0) / 2.0 * dt;
        let mut u: Vec<f64> = (0..n)
            .map(|i| separatrix_u(1.0, t_lo + dt * i as f64))
            .collect();
        let v = vec![0.0; n];
        for (i, w) in u.iter_mut().enumerate() {
            let t = t_lo + dt * i as f64;
            *w += 0.01 * (-t * t).exp();
        }
        let q = Trajectory::new(
            t_lo,
            dt,
            u,
            v,
            (BoundaryCondition::Pinned, BoundaryCondition::Pinned),
        )
        .unwrap();
        let opts = RelaxOptions {
            tol: 2e-6,
            s_max: 2000.0,
            max_steps: 200_000,
            ..Default::default()
        };
        let (state, cert) = relax(&p, q, &opts).unwrap();
        assert!(cert.converged, "loc rhs ended at {}", cert.loc_rhs);
        assert!(
            cert.el_residual_sup <= 1e-4,
            "el residual {}",
            cert.el_residual_sup
        );
        // The limit is a translate of the separatrix: find the shift from the
        // point where u crosses pi and compare in sup norm.
        let cross = (0..n - 1)
            .find(|&i| {
                (state.q.u[i] - std::f64::consts::PI) * (state.q.u[i + 1] - std::f64::consts::PI)
                    <= 0.0
            })
            .unwrap();
        let frac =
            (std::f64::consts::PI - state.q.u[cross]) / (state.q.u[cross + 1] - state.q.u[cross]);
        let shift = state.q.time(cross) + frac * dt;
        let sup = (1..n - 1).fold(0.0f64, |m, i| {
            m.max((state.q.u[i] - separatrix_u(1.0, state.q.time(i) - shift)).abs())
        });
        assert!(sup < 1e-3, "distance to translated separatrix {sup}");
    }
}
