//! One-sided action minimizers, Peierls barriers and heteroclinic gluing.
//!
//! `S⁻_ω(t₀, v₀)` and `S⁺_ω(t₀, v₀)` are infima of the adjusted action over
//! curves pinned to `(π, v₀)` at `t₀` and asymptotic to the torus on one
//! side. At desk scale the infimum is taken over grid curves on a truncated
//! horizon: the anchor and the far `u`-end are pinned, the far `v`-end is
//! free (which discretely enforces `v_t = ω` there), and the action descends
//! under a preconditioned limited-memory quasi-Newton loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{max_gap_neighborhoods, GapAnalysis, TorusField};
use crate::gradientflow::{BoundaryCondition, Trajectory};
use crate::melnikov::melnikov_primitive;
use crate::model::{self, SystemParams};
use crate::opt::{lbfgs, tridiag_solve, LbfgsOptions};
use crate::TAU;

const PI: f64 = std::f64::consts::PI;

/// Field of Peierls-barrier samples (shared shape with the Melnikov field).
pub type BarrierField = TorusField;

/// Which side of the anchor a minimizer lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    TwoSided,
}

/// Rectangular search neighborhood in the `(t₀, v₀)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub t_center: f64,
    pub v_center: f64,
    pub t_half: f64,
    pub v_half: f64,
}

impl SearchBox {
    pub fn contains(&self, t: f64, v: f64) -> bool {
        (t - self.t_center).abs() <= self.t_half && (v - self.v_center).abs() <= self.v_half
    }
}

/// A converged (or best-effort) action minimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizerCurve {
    pub side: Side,
    pub omega: f64,
    pub omega_tilde: Option<f64>,
    /// Anchor `(t₀, v₀)`: the curve passes through `(π, v₀)` at `t₀`.
    pub anchor: (f64, f64),
    pub trajectory: Trajectory,
    /// Value of the discretized adjusted action.
    pub action: f64,
    pub grad_norm: f64,
    /// `|q⁻_t(t₀) − q⁺_t(t₀)|` for glued curves.
    pub c1_defect: Option<f64>,
    /// Boundary-ring margin of `Σ` over the search box, for glued curves.
    pub boundary_margin: Option<f64>,
    pub neighborhood: Option<SearchBox>,
}

impl MinimizerCurve {
    /// Least-squares decay rate of `|u − asymptote|` over the far half of the
    /// horizon (positive; compare against `√ε/2`).
    pub fn measured_decay_rate(&self) -> f64 {
        let q = &self.trajectory;
        let n = q.len();
        let (t0, _) = self.anchor;
        let target = |t: f64| -> f64 {
            match self.side {
                Side::Left => 0.0,
                Side::Right => TAU,
                Side::TwoSided => {
                    if t < t0 {
                        0.0
                    } else {
                        TAU
                    }
                }
            }
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let t = q.time(i);
            let gap = (q.u[i] - target(t)).abs();
            if (1e-8..=0.5).contains(&gap) && (t - t0).abs() > 1.0 {
                xs.push((t - t0).abs());
                ys.push(gap.ln());
            }
        }
        if xs.len() < 8 {
            return f64::NAN;
        }
        let nx = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / nx;
        let my = ys.iter().sum::<f64>() / nx;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
        -num / den
    }
}

/// Options for the discretized-action descent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizerOptions {
    /// Grid spacing of the minimization horizon.
    pub dt: f64,
    /// Horizon length; `None` selects `30/√ε`.
    pub horizon: Option<f64>,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        // The gradient floor reachable in f64 grows as the grid refines;
        // 1e-8 corresponds to Euler-Lagrange residuals around 1e-6 at the
        // default spacing.
        MinimizerOptions {
            dt: 0.01,
            horizon: None,
            grad_tol: 1e-8,
            max_iter: 8000,
        }
    }
}

impl MinimizerOptions {
    pub fn horizon_for(&self, epsilon: f64) -> f64 {
        self.horizon.unwrap_or(30.0 / epsilon.sqrt())
    }
}

/// The discretized one-sided problem: nodes `0..=n`, anchor at one end,
/// far `u` pinned to the asymptote, far `v` free.
struct OneSidedProblem<'a> {
    params: &'a SystemParams,
    omega: f64,
    side: Side,
    t_lo: f64,
    dt: f64,
    n: usize, // number of cells; nodes are 0..=n
    anchor_v: f64,
}

impl<'a> OneSidedProblem<'a> {
    /// Free variables: interior `u` (n−1), interior `v` (n−1), far-end `v`.
    fn dim(&self) -> usize {
        2 * (self.n - 1) + 1
    }

    fn anchor_node(&self) -> usize {
        match self.side {
            Side::Right => 0,
            Side::Left => self.n,
            Side::TwoSided => unreachable!(),
        }
    }

    fn far_node(&self) -> usize {
        self.n - self.anchor_node()
    }

    fn u_fixed(&self, node: usize) -> Option<f64> {
        if node == self.anchor_node() {
            Some(PI)
        } else if node == self.far_node() {
            Some(if self.side == Side::Right { TAU } else { 0.0 })
        } else {
            None
        }
    }

    /// Assemble full node arrays from the packed free variables.
    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        let mut idx = 0;
        for node in 0..=n {
            u[node] = match self.u_fixed(node) {
                Some(val) => val,
                None => {
                    let val = x[idx];
                    idx += 1;
                    val
                }
            };
        }
        for node in 0..=n {
            if node == self.anchor_node() {
                v[node] = self.anchor_v;
            } else {
                v[node] = x[idx];
                idx += 1;
            }
        }
        debug_assert_eq!(idx, self.dim());
        (u, v)
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (u, v) = self.unpack(x);
        let n = self.n;
        let dt = self.dt;
        let om = self.omega;
        let mut gu = vec![0.0; n + 1];
        let mut gv = vec![0.0; n + 1];
        let mut action = 0.0;
        for i in 0..n {
            let du = u[i + 1] - u[i];
            let dv = v[i + 1] - v[i] - om * dt;
            action += du * du / (2.0 * dt) + dv * dv / (2.0 * dt);
            gu[i] -= du / dt;
            gu[i + 1] += du / dt;
            gv[i] -= dv / dt;
            gv[i + 1] += dv / dt;
        }
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let t = self.t_lo + dt * i as f64;
            action += w * dt * model::potential(self.params, u[i], v[i], t);
            let (vu, vv) = model::grad_potential(self.params, u[i], v[i], t);
            gu[i] += w * dt * vu;
            gv[i] += w * dt * vv;
        }
        // Pack the gradient over free variables.
        let mut idx = 0;
        for node in 0..=n {
            if self.u_fixed(node).is_none() {
                grad[idx] = gu[node];
                idx += 1;
            }
        }
        for node in 0..=n {
            if node != self.anchor_node() {
                grad[idx] = gv[node];
                idx += 1;
            }
        }
        action
    }

    /// Apply the inverse of the kinetic-part Hessian (two tridiagonal
    /// solves) as preconditioner.
    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let nu = n - 1;
        let nv = n; // interior v plus the free far end
        let mut out = vec![0.0; self.dim()];
        // u-chain: Dirichlet at both ends -> diag 2/dt.
        let diag_u = vec![2.0 / self.dt; nu];
        let zu = tridiag_solve(&diag_u, -1.0 / self.dt, &g[0..nu]);
        out[0..nu].copy_from_slice(&zu);
        // v-chain: Dirichlet at the anchor, free at the far end. The packed
        // order of v variables runs over nodes skipping the anchor, which is
        // an end node, so the chain is contiguous in node order.
        let mut diag_v = vec![2.0 / self.dt; nv];
        match self.side {
            Side::Right => diag_v[nv - 1] = 1.0 / self.dt, // far end = last node
            Side::Left => diag_v[0] = 1.0 / self.dt,       // far end = node 0
            Side::TwoSided => unreachable!(),
        }
        let zv = tridiag_solve(&diag_v, -1.0 / self.dt, &g[nu..nu + nv]);
        out[nu..nu + nv].copy_from_slice(&zv);
        out
    }

    fn initial_guess(&self) -> Vec<f64> {
        let n = self.n;
        let t0 = self.t_lo + self.dt * self.anchor_node() as f64;
        let mut x = Vec::with_capacity(self.dim());
        for node in 0..=n {
            if self.u_fixed(node).is_none() {
                let t = self.t_lo + self.dt * node as f64;
                x.push(crate::separatrix::separatrix_u(self.params.epsilon, t - t0));
            }
        }
        for node in 0..=n {
            if node != self.anchor_node() {
                let t = self.t_lo + self.dt * node as f64;
                x.push(self.anchor_v + self.omega * (t - t0));
            }
        }
        x
    }
}

/// Minimize the one-sided adjusted action at `(ω, t₀, v₀)`.
pub fn one_sided_minimizer(
    params: &SystemParams,
    omega: f64,
    t0: f64,
    v0: f64,
    side: Side,
    opts: &MinimizerOptions,
) -> Result<MinimizerCurve> {
    if side == Side::TwoSided {
        return Err(Error::invalid_input(
            "use heteroclinic_minimizer for two-sided curves",
        ));
    }
    let horizon = opts.horizon_for(params.epsilon);
    if horizon < 10.0 / params.epsilon.sqrt() {
        return Err(Error::invalid_input(format!(
            "horizon {horizon} is shorter than 10/sqrt(eps); the tail bound cannot engage"
        )));
    }
    let n = (horizon / opts.dt).round().max(8.0) as usize;
    let t_lo = match side {
        Side::Right => t0,
        Side::Left => t0 - opts.dt * n as f64,
        Side::TwoSided => unreachable!(),
    };
    let problem = OneSidedProblem {
        params,
        omega,
        side,
        t_lo,
        dt: opts.dt,
        n,
        anchor_v: v0,
    };
    let lopts = LbfgsOptions {
        grad_tol: opts.grad_tol,
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let res = lbfgs(
        problem.initial_guess(),
        |x, g| problem.eval(x, g),
        |g| problem.precondition(g),
        &lopts,
    );
    if !res.converged {
        return Err(Error::OptimizationFailure {
            grad_norm: res.grad_norm_inf,
            iterations: res.iterations,
            best: res.x,
        });
    }
    let (u, v) = problem.unpack(&res.x);
    let bc = match side {
        Side::Right => (
            BoundaryCondition::Pinned,
            BoundaryCondition::ClampedToTorus { k: 1, omega },
        ),
        Side::Left => (
            BoundaryCondition::ClampedToTorus { k: 0, omega },
            BoundaryCondition::Pinned,
        ),
        Side::TwoSided => unreachable!(),
    };
    let trajectory = Trajectory::new(t_lo, opts.dt, u, v, bc)?;
    Ok(MinimizerCurve {
        side,
        omega,
        omega_tilde: None,
        anchor: (t0, v0),
        trajectory,
        action: res.value,
        grad_norm: res.grad_norm_inf,
        c1_defect: None,
        boundary_margin: None,
        neighborhood: None,
    })
}

/// The three Peierls values at one point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeierlsValues {
    pub s_minus: f64,
    pub s_plus: f64,
    pub s: f64,
}

/// `S_ω = S⁻_ω + S⁺_ω` from two one-sided minimizations.
pub fn peierls(
    params: &SystemParams,
    omega: f64,
    t0: f64,
    v0: f64,
    opts: &MinimizerOptions,
) -> Result<PeierlsValues> {
    let left = one_sided_minimizer(params, omega, t0, v0, Side::Left, opts)?;
    let right = one_sided_minimizer(params, omega, t0, v0, Side::Right, opts)?;
    Ok(PeierlsValues {
        s_minus: left.action,
        s_plus: right.action,
        s: left.action + right.action,
    })
}

/// `Σ_{ω,ω̃}(t₀,v₀) = S⁻_ω + S⁺_ω̃ + (ω−ω̃) v₀ + ½(ω̃²−ω²) t₀`.
///
/// The linear terms carry the signs that make `Σ` stationary exactly at
/// C¹-glued heteroclinics: at a critical point the conjugate momenta of the
/// two one-sided minimizers match, so the glued curve solves the
/// Euler–Lagrange equations through the anchor.
pub fn sigma(
    params: &SystemParams,
    omega: f64,
    omega_tilde: f64,
    t0: f64,
    v0: f64,
    opts: &MinimizerOptions,
) -> Result<f64> {
    let left = one_sided_minimizer(params, omega, t0, v0, Side::Left, opts)?;
    let right = one_sided_minimizer(params, omega_tilde, t0, v0, Side::Right, opts)?;
    Ok(left.action
        + right.action
        + (omega - omega_tilde) * v0
        + 0.5 * (omega_tilde * omega_tilde - omega * omega) * t0)
}

/// Glue the left `ω`- and right `ω̃`-minimizers at the `Σ`-argmin inside
/// `neighborhood`. The search is a deterministic shrinking grid refinement;
/// a minimum on the outer boundary voids the margin certificate and errors.
pub fn heteroclinic_minimizer(
    params: &SystemParams,
    omega: f64,
    omega_tilde: f64,
    neighborhood: SearchBox,
    opts: &MinimizerOptions,
) -> Result<MinimizerCurve> {
    let sigma_at =
        |t0: f64, v0: f64| -> Result<f64> { sigma(params, omega, omega_tilde, t0, v0, opts) };

    // Initial 5x5 scan, keeping the boundary ring for the margin report.
    let n0 = 5usize;
    let mut pts = Vec::new();
    for j in 0..n0 {
        for i in 0..n0 {
            let t = neighborhood.t_center
                + neighborhood.t_half * (2.0 * i as f64 / (n0 - 1) as f64 - 1.0);
            let v = neighborhood.v_center
                + neighborhood.v_half * (2.0 * j as f64 / (n0 - 1) as f64 - 1.0);
            pts.push((i, j, t, v));
        }
    }
    let values: Vec<Result<f64>> = pts.par_iter().map(|&(_, _, t, v)| sigma_at(t, v)).collect();
    let mut grid = vec![0.0; n0 * n0];
    for (idx, val) in values.into_iter().enumerate() {
        grid[idx] = val?;
    }
    let min_val = grid.iter().copied().fold(f64::INFINITY, f64::min);
    // Ties broken by the smallest (t0 mod 2pi, v0 mod 2pi) lexicographic key.
    let tie_tol = 1e-12 * (1.0 + min_val.abs());
    let key = |idx: usize| {
        let t = pts[idx].2.rem_euclid(TAU);
        let v = pts[idx].3.rem_euclid(TAU);
        (t, v)
    };
    let best_idx = (0..grid.len())
        .filter(|&idx| grid[idx] <= min_val + tie_tol)
        .min_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap())
        .expect("non-empty grid");
    let mut best_val = grid[best_idx];
    let (bi, bj) = (best_idx % n0, best_idx / n0);
    if bi == 0 || bj == 0 || bi == n0 - 1 || bj == n0 - 1 {
        return Err(Error::InvalidNeighborhood(format!(
            "sigma minimum sits on the search boundary at ({}, {})",
            pts[best_idx].2, pts[best_idx].3
        )));
    }
    let boundary_margin = grid
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let (i, j) = (idx % n0, idx / n0);
            i == 0 || j == 0 || i == n0 - 1 || j == n0 - 1
        })
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min)
        - best_val;

    // Shrinking 3x3 refinement around the argmin. The C1 defect of the glue
    // scales with the argmin accuracy, so the refinement runs deep.
    let mut center = (pts[best_idx].2, pts[best_idx].3);
    let mut half = (
        2.0 * neighborhood.t_half / (n0 - 1) as f64,
        2.0 * neighborhood.v_half / (n0 - 1) as f64,
    );
    for _ in 0..12 {
        let mut cand = Vec::new();
        for j in -1i64..=1 {
            for i in -1i64..=1 {
                cand.push((center.0 + half.0 * i as f64, center.1 + half.1 * j as f64));
            }
        }
        let vals: Vec<Result<f64>> = cand.par_iter().map(|&(t, v)| sigma_at(t, v)).collect();
        let mut best = (center, best_val);
        for (k, val) in vals.into_iter().enumerate() {
            let val = val?;
            if val < best.1 {
                best = (cand[k], val);
            }
        }
        center = best.0;
        best_val = best.1;
        half = (half.0 * 0.5, half.1 * 0.5);
    }
    let (t0, v0) = center;

    // Final glued curve.
    let left = one_sided_minimizer(params, omega, t0, v0, Side::Left, opts)?;
    let right = one_sided_minimizer(params, omega_tilde, t0, v0, Side::Right, opts)?;
    let glued = glue(&left, &right)?;
    let du_l = one_sided_slope(&left.trajectory, true);
    let du_r = one_sided_slope(&right.trajectory, false);
    let defect = ((du_l.0 - du_r.0).powi(2) + (du_l.1 - du_r.1).powi(2)).sqrt();
    Ok(MinimizerCurve {
        side: Side::TwoSided,
        omega,
        omega_tilde: Some(omega_tilde),
        anchor: (t0, v0),
        trajectory: glued,
        action: left.action
            + right.action
            + (omega - omega_tilde) * v0
            + 0.5 * (omega_tilde * omega_tilde - omega * omega) * t0,
        grad_norm: left.grad_norm.max(right.grad_norm),
        c1_defect: Some(defect),
        boundary_margin: Some(boundary_margin),
        neighborhood: Some(neighborhood),
    })
}

/// One-sided derivative `(u_t, v_t)` at the anchor end of a half-curve.
fn one_sided_slope(q: &Trajectory, at_end: bool) -> (f64, f64) {
    let n = q.len();
    let dt = q.dt;
    if at_end {
        (
            (3.0 * q.u[n - 1] - 4.0 * q.u[n - 2] + q.u[n - 3]) / (2.0 * dt),
            (3.0 * q.v[n - 1] - 4.0 * q.v[n - 2] + q.v[n - 3]) / (2.0 * dt),
        )
    } else {
        (
            (-3.0 * q.u[0] + 4.0 * q.u[1] - q.u[2]) / (2.0 * dt),
            (-3.0 * q.v[0] + 4.0 * q.v[1] - q.v[2]) / (2.0 * dt),
        )
    }
}

fn glue(left: &MinimizerCurve, right: &MinimizerCurve) -> Result<Trajectory> {
    let lq = &left.trajectory;
    let rq = &right.trajectory;
    if (lq.dt - rq.dt).abs() > 1e-12 {
        return Err(Error::invalid_input("glue requires matching grids"));
    }
    // The anchor node is shared: drop the duplicate.
    let mut u = lq.u.clone();
    let mut v = lq.v.clone();
    u.extend_from_slice(&rq.u[1..]);
    v.extend_from_slice(&rq.v[1..]);
    Trajectory::new(lq.t_lo, lq.dt, u, v, (lq.bc.0, rq.bc.1))
}

/// Report for condition (S1) over an `ω`-interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S1Report {
    pub omega_range: (f64, f64),
    /// Uniform `Δ₀` (the boundary gap is `3Δ₀`), minimized over `ω`.
    pub delta0: f64,
    pub r: f64,
    pub diameter_cap: f64,
    /// The sanity ceiling `9√ε·μ` on `Δ₀`.
    pub delta0_ceiling: f64,
    pub per_omega: Vec<S1Slice>,
    pub pass: bool,
}

/// Per-`ω` slice of an [`S1Report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S1Slice {
    pub omega: f64,
    pub gap: GapAnalysis,
}

/// Scan a Peierls field `S_ω` over the fundamental square.
pub fn scan_barrier_field(
    params: &SystemParams,
    omega: f64,
    n_t: usize,
    n_v: usize,
    opts: &MinimizerOptions,
) -> Result<BarrierField> {
    assert!(n_t >= 8 && n_v >= 8, "field resolutions must be at least 8");
    let ht = TAU / n_t as f64;
    let hv = TAU / n_v as f64;
    let values: Vec<Result<f64>> = (0..n_t * n_v)
        .into_par_iter()
        .map(|idx| {
            let i = idx % n_t;
            let j = idx / n_t;
            peierls(params, omega, i as f64 * ht, j as f64 * hv, opts).map(|p| p.s)
        })
        .collect();
    let mut field = Vec::with_capacity(n_t * n_v);
    for v in values {
        field.push(v?);
    }
    Ok(TorusField::new(omega, n_t, n_v, field))
}

/// Check condition (S1): scan `S_ω` over the `ω`-grid and grow maximal
/// sublevel neighborhoods with boundary gap `3Δ₀`.
pub fn check_s1(
    params: &SystemParams,
    omega_lo: f64,
    omega_hi: f64,
    n_omega: usize,
    n_t: usize,
    n_v: usize,
    opts: &MinimizerOptions,
) -> Result<S1Report> {
    assert!(omega_hi >= omega_lo && n_omega >= 1);
    let cap = 1.0 / (144.0 * params.epsilon.sqrt());
    let omegas: Vec<f64> = if n_omega == 1 {
        vec![0.5 * (omega_lo + omega_hi)]
    } else {
        (0..n_omega)
            .map(|i| omega_lo + (omega_hi - omega_lo) * i as f64 / (n_omega - 1) as f64)
            .collect()
    };
    let mut per_omega = Vec::new();
    for omega in omegas {
        let field = scan_barrier_field(params, omega, n_t, n_v, opts)?;
        let gap = max_gap_neighborhoods(&field, cap, 1e-6);
        per_omega.push(S1Slice { omega, gap });
    }
    let delta0 = per_omega
        .iter()
        .map(|s| s.gap.gap / 3.0)
        .fold(f64::INFINITY, f64::min);
    let delta0 = if delta0.is_finite() { delta0 } else { 0.0 };
    let r = per_omega
        .iter()
        .map(|s| s.gap.max_diameter)
        .fold(0.0f64, f64::max);
    let all_pass = per_omega.iter().all(|s| s.gap.pass);
    let pass = all_pass && delta0 > 0.0 && r * params.epsilon.sqrt() <= 1.0 / 144.0 + 1e-12;
    Ok(S1Report {
        omega_range: (omega_lo, omega_hi),
        delta0,
        r,
        diameter_cap: cap,
        delta0_ceiling: 9.0 * params.epsilon.sqrt() * params.mu,
        per_omega,
        pass,
    })
}

/// One row of the Melnikov-error scaling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorScalingRow {
    pub mu: f64,
    /// `|ΔS_ω − μ·ΔM_ω|` per point pair.
    pub errors: Vec<f64>,
}

/// Result of the `|ΔS − μΔM| = O(ε μ^{3/2})` study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorScalingReport {
    pub omega: f64,
    pub pairs: Vec<((f64, f64), (f64, f64))>,
    pub rows: Vec<ErrorScalingRow>,
    /// Log–log slope of the mean error against `μ`.
    pub slope: f64,
}

/// Default point pairs for [`melnikov_error_study`]: two pairs, so each `μ`
/// costs eight one-sided barrier solves.
pub fn default_error_pairs() -> Vec<((f64, f64), (f64, f64))> {
    vec![((0.0, 0.0), (PI, PI)), ((1.0, 2.0), (4.0, 5.0))]
}

/// Measure the first-order Melnikov approximation error across `mu_list` and
/// fit its log–log slope (the theory gives exponent 3/2).
pub fn melnikov_error_study(
    params_base: &SystemParams,
    omega: f64,
    mu_list: &[f64],
    pairs: &[((f64, f64), (f64, f64))],
    opts: &MinimizerOptions,
) -> Result<ErrorScalingReport> {
    if mu_list.len() < 2 {
        return Err(Error::invalid_input(
            "need at least two mu values to fit a slope",
        ));
    }
    let mut rows = Vec::new();
    for &mu in mu_list {
        let p = SystemParams::new(params_base.epsilon, mu, params_base.coupling.clone())
            .map_err(|e| Error::invalid_input(format!("mu = {mu}: {e}")))?;
        let mut errors = Vec::new();
        for &((ta, va), (tb, vb)) in pairs {
            let sa = peierls(&p, omega, ta, va, opts)?.s;
            let sb = peierls(&p, omega, tb, vb, opts)?.s;
            let ma = melnikov_primitive(params_base, omega, ta, va);
            let mb = melnikov_primitive(params_base, omega, tb, vb);
            errors.push(((sb - sa) - mu * (mb - ma)).abs());
        }
        rows.push(ErrorScalingRow { mu, errors });
    }
    // Fit log(mean err) against log(mu).
    let xs: Vec<f64> = rows.iter().map(|r| r.mu.ln()).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| {
            (r.errors.iter().sum::<f64>() / r.errors.len() as f64)
                .max(1e-300)
                .ln()
        })
        .collect();
    let nx = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nx;
    let my = ys.iter().sum::<f64>() / nx;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    Ok(ErrorScalingReport {
        omega,
        pairs: pairs.to_vec(),
        rows,
        slope: num / den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CouplingFunction;
    use crate::separatrix::separatrix_u;

    fn arnold(epsilon: f64, mu: f64) -> SystemParams {
        SystemParams::new(epsilon, mu, CouplingFunction::arnold()).unwrap()
    }

    fn quick_opts() -> MinimizerOptions {
        MinimizerOptions {
            dt: 0.02,
            horizon: Some(25.0),
            grad_tol: 1e-8,
            max_iter: 6000,
        }
    }

    #[test]
    fn mu_zero_action_is_four_sqrt_eps() {
        for &e in &[0.64, 1.0] {
            let p = arnold(e, 0.0);
            let opts = MinimizerOptions {
                dt: 0.01,
                ..Default::default()
            };
            let right = one_sided_minimizer(&p, 0.7, 0.3, 1.1, Side::Right, &opts).unwrap();
            assert!(
                (right.action - 4.0 * e.sqrt()).abs() < 1e-4,
                "S+ = {} vs {}",
                right.action,
                4.0 * e.sqrt()
            );
            // The minimizer is the time-shifted separatrix.
            let q = &right.trajectory;
            let sup = (0..q.len()).fold(0.0f64, |m, i| {
                m.max((q.u[i] - separatrix_u(e, q.time(i) - right.anchor.0)).abs())
            });
            assert!(sup < 1e-3, "sup distance to separatrix {sup}");
            let left = one_sided_minimizer(&p, 0.7, 0.3, 1.1, Side::Left, &opts).unwrap();
            assert!((left.action - 4.0 * e.sqrt()).abs() < 1e-4);
        }
    }

    #[test]
    fn action_within_paper_bracket() {
        let p = arnold(0.64, 0.04);
        let opts = quick_opts();
        let lo = 4.0 * (p.epsilon * (1.0 - p.mu)).sqrt();
        let hi = 4.0 * (p.epsilon * (1.0 + p.mu)).sqrt();
        for &(om, t0, v0) in &[(0.5, 0.0, 0.0), (1.0, 2.0, 3.0), (1.5, 4.0, 5.5)] {
            for side in [Side::Left, Side::Right] {
                let c = one_sided_minimizer(&p, om, t0, v0, side, &opts).unwrap();
                assert!(
                    c.action > lo - 1e-3 && c.action < hi + 1e-3,
                    "action {} outside [{lo}, {hi}]",
                    c.action
                );
            }
        }
    }

    #[test]
    fn minimizer_interior_and_sandwich() {
        let p = arnold(0.64, 0.01);
        let c = one_sided_minimizer(&p, 1.0, 0.4, 0.9, Side::Right, &quick_opts()).unwrap();
        let q = &c.trajectory;
        let (zm, zp) = crate::separatrix::build_supersub(&p).unwrap();
        let _ = zm;
        for i in 1..q.len() - 1 {
            assert!(
                q.u[i] > 0.0 && q.u[i] < TAU,
                "interiority violated at node {i}"
            );
            let t = q.time(i) - c.anchor.0;
            if t >= zp.domain.0 {
                assert!(
                    zp.value(t) <= q.u[i] + 1e-6,
                    "sandwich violated at t = {t}: z+ = {} > u = {}",
                    zp.value(t),
                    q.u[i]
                );
            }
        }
    }

    #[test]
    fn horizon_doubling_changes_action_little() {
        let p = arnold(0.64, 0.04);
        let base = MinimizerOptions {
            dt: 0.02,
            horizon: Some(20.0),
            ..Default::default()
        };
        let double = MinimizerOptions {
            dt: 0.02,
            horizon: Some(40.0),
            ..Default::default()
        };
        let a = one_sided_minimizer(&p, 1.0, 0.0, 0.0, Side::Right, &base).unwrap();
        let b = one_sided_minimizer(&p, 1.0, 0.0, 0.0, Side::Right, &double).unwrap();
        assert!(
            (a.action - b.action).abs() < 1e-6,
            "{} vs {}",
            a.action,
            b.action
        );
        // Monotone: relaxing the constraint cannot raise the infimum.
        assert!(b.action <= a.action + 1e-6);
    }

    #[test]
    fn rejects_short_horizon() {
        let p = arnold(1.0, 0.0);
        let opts = MinimizerOptions {
            dt: 0.02,
            horizon: Some(5.0),
            ..Default::default()
        };
        assert!(one_sided_minimizer(&p, 1.0, 0.0, 0.0, Side::Right, &opts).is_err());
    }

    #[test]
    fn v_drift_bounded_by_mu() {
        let p = arnold(0.64, 0.04);
        let c = one_sided_minimizer(&p, 1.2, 0.7, 2.2, Side::Right, &quick_opts()).unwrap();
        let q = &c.trajectory;
        let mut worst = 0.0f64;
        for i in 0..q.len() {
            let t = q.time(i);
            worst = worst.max((q.v[i] - c.anchor.1 - c.omega * (t - c.anchor.0)).abs());
        }
        assert!(
            worst <= 5.0 * p.mu,
            "measured drift constant {}",
            worst / p.mu
        );
    }

    #[test]
    fn decay_rate_at_least_half_sqrt_eps() {
        let p = arnold(0.64, 0.01);
        let c = one_sided_minimizer(&p, 1.0, 0.0, 0.0, Side::Right, &quick_opts()).unwrap();
        let rate = c.measured_decay_rate();
        assert!(rate >= 0.9 * p.epsilon.sqrt() / 2.0, "decay rate {rate}");
    }

    #[test]
    fn peierls_sum_and_mu_zero_value() {
        let p = arnold(0.81, 0.0);
        let vals = peierls(&p, 0.9, 1.0, 2.0, &quick_opts()).unwrap();
        assert!((vals.s - 8.0 * 0.9).abs() < 2e-4, "S = {}", vals.s);
        assert!((vals.s - vals.s_minus - vals.s_plus).abs() < 1e-14);
    }

    #[test]
    fn peierls_lipschitz_in_omega() {
        let p = arnold(0.64, 0.04);
        let opts = quick_opts();
        let a = one_sided_minimizer(&p, 1.0, 0.3, 0.7, Side::Right, &opts).unwrap();
        let b = one_sided_minimizer(&p, 1.05, 0.3, 0.7, Side::Right, &opts).unwrap();
        let c = (a.action - b.action).abs() / (p.mu * 0.05);
        assert!(c < 50.0, "measured Lipschitz constant {c}");
    }

    #[test]
    fn sigma_reduces_to_peierls() {
        let p = arnold(0.64, 0.0);
        let opts = quick_opts();
        let s = sigma(&p, 0.8, 0.8, 0.4, 1.1, &opts).unwrap();
        assert!((s - 8.0 * 0.8).abs() < 2e-4, "Sigma = {s}");
        // Periodicity in v0 shifts by the linear term only.
        let p2 = arnold(0.64, 0.04);
        let s1 = sigma(&p2, 0.8, 0.9, 0.4, 1.1, &opts).unwrap();
        let s2 = sigma(&p2, 0.8, 0.9, 0.4, 1.1 + TAU, &opts).unwrap();
        assert!(
            (s2 - s1 - (0.8 - 0.9) * TAU).abs() < 1e-5,
            "Sigma periodicity defect {}",
            s2 - s1 - (0.8 - 0.9) * TAU
        );
    }

    #[test]
    fn heteroclinic_rejects_boundary_minimum() {
        // A heavy omega step tilts Sigma so strongly that no interior
        // minimum exists inside the search box.
        let p = arnold(0.64, 0.01);
        let opts = MinimizerOptions {
            dt: 0.05,
            horizon: Some(12.5),
            grad_tol: 5e-8,
            ..Default::default()
        };
        let nb = SearchBox {
            t_center: 0.0,
            v_center: 0.0,
            t_half: 1.0,
            v_half: 1.0,
        };
        let err = heteroclinic_minimizer(&p, 0.9, 1.1, nb, &opts).unwrap_err();
        assert!(
            matches!(err, crate::error::Error::InvalidNeighborhood(_)),
            "{err}"
        );
    }

    #[test]
    fn heteroclinic_boundary_margin_positive() {
        let p = arnold(0.64, 0.01);
        let opts = MinimizerOptions {
            dt: 0.05,
            horizon: Some(12.5),
            grad_tol: 5e-8,
            ..Default::default()
        };
        let nb = SearchBox {
            t_center: 0.1,
            v_center: 0.1,
            t_half: 1.0,
            v_half: 1.0,
        };
        let het = heteroclinic_minimizer(&p, 1.0, 1.0, nb, &opts).unwrap();
        assert!(het.boundary_margin.unwrap() > 0.0);
    }

    #[test]
    fn heteroclinic_glues_separatrix_at_mu_zero() {
        let p = arnold(1.0, 0.0);
        let opts = MinimizerOptions {
            dt: 0.02,
            horizon: Some(20.0),
            ..Default::default()
        };
        let nb = SearchBox {
            t_center: 0.0,
            v_center: 0.0,
            t_half: 0.3,
            v_half: 0.3,
        };
        let het = heteroclinic_minimizer(&p, 1.0, 1.0, nb, &opts).unwrap();
        assert!(
            het.c1_defect.unwrap() <= 1e-4,
            "C1 defect {}",
            het.c1_defect.unwrap()
        );
        let res = model::el_residual(&p, &het.trajectory).unwrap();
        assert!(res.sup_norm() <= 1e-3, "EL residual {}", res.sup_norm());
    }
}
