//! The pendulum–rotator system: potential, coupling, adjusted Lagrangian
//! density, Euler–Lagrange residual and the standing-assumption checks.
//!
//! The potential is `V(u, v, t) = ε (1 − cos u)(1 − μ f(u, v, t))` with a
//! trigonometric-polynomial coupling `f`. Restricting `f` to trigonometric
//! polynomials keeps every derivative analytic and makes the sup-norm
//! assumptions checkable by coefficient sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradientflow::Trajectory;

/// One term `a · cos(m·u + n·v + p·t + φ)` of the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTerm {
    pub amplitude: f64,
    pub freq_u: i32,
    pub freq_v: i32,
    pub freq_t: i32,
    #[serde(default)]
    pub phase: f64,
}

impl CouplingTerm {
    pub fn new(amplitude: f64, freq_u: i32, freq_v: i32, freq_t: i32, phase: f64) -> Self {
        CouplingTerm {
            amplitude,
            freq_u,
            freq_v,
            freq_t,
            phase,
        }
    }

    fn angle(&self, u: f64, v: f64, t: f64) -> f64 {
        f64::from(self.freq_u) * u
            + f64::from(self.freq_v) * v
            + f64::from(self.freq_t) * t
            + self.phase
    }
}

/// A coupling `f(u, v, t) = Σ aᵢ cos(mᵢ u + nᵢ v + pᵢ t + φᵢ)`, 2π-periodic
/// in all three variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingFunction {
    pub terms: Vec<CouplingTerm>,
}

impl CouplingFunction {
    pub fn new(terms: Vec<CouplingTerm>) -> Self {
        CouplingFunction { terms }
    }

    /// The zero coupling, `f ≡ 0`.
    pub fn zero() -> Self {
        CouplingFunction { terms: Vec::new() }
    }

    /// A constant coupling, `f ≡ c`.
    pub fn constant(c: f64) -> Self {
        CouplingFunction {
            terms: vec![CouplingTerm::new(c, 0, 0, 0, 0.0)],
        }
    }

    /// The catalog coupling `f(u, v, t) = (cos v + cos t) / 2`, the classical
    /// Arnold example scaled so the sup-norm assumptions hold.
    pub fn arnold() -> Self {
        CouplingFunction {
            terms: vec![
                CouplingTerm::new(0.5, 0, 1, 0, 0.0),
                CouplingTerm::new(0.5, 0, 0, 1, 0.0),
            ],
        }
    }

    pub fn eval(&self, u: f64, v: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|c| c.amplitude * c.angle(u, v, t).cos())
            .sum()
    }

    /// Partial derivatives `(f_u, f_v, f_t)`.
    pub fn grad(&self, u: f64, v: f64, t: f64) -> (f64, f64, f64) {
        let mut fu = 0.0;
        let mut fv = 0.0;
        let mut ft = 0.0;
        for c in &self.terms {
            let s = c.amplitude * c.angle(u, v, t).sin();
            fu -= f64::from(c.freq_u) * s;
            fv -= f64::from(c.freq_v) * s;
            ft -= f64::from(c.freq_t) * s;
        }
        (fu, fv, ft)
    }

    /// ℓ¹ bound `Σ |aᵢ|` on `sup |f|`.
    pub fn l1_bound(&self) -> f64 {
        self.terms.iter().map(|c| c.amplitude.abs()).sum()
    }

    /// ℓ¹ bound `Σ |aᵢ mᵢ|` on `sup |f_u|`.
    pub fn l1_bound_u(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| (c.amplitude * f64::from(c.freq_u)).abs())
            .sum()
    }

    /// ℓ¹ bound `Σ |aᵢ nᵢ|` on `sup |f_v|`.
    pub fn l1_bound_v(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| (c.amplitude * f64::from(c.freq_v)).abs())
            .sum()
    }

    /// ℓ¹ bound `Σ |aᵢ mᵢ²|` on `sup |f_uu|`, and the mixed/second bounds
    /// used by the stability policy of the flow integrator.
    pub fn l1_bound_uu(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| (c.amplitude * f64::from(c.freq_u) * f64::from(c.freq_u)).abs())
            .sum()
    }

    pub fn l1_bound_uv(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| (c.amplitude * f64::from(c.freq_u) * f64::from(c.freq_v)).abs())
            .sum()
    }

    pub fn l1_bound_vv(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| (c.amplitude * f64::from(c.freq_v) * f64::from(c.freq_v)).abs())
            .sum()
    }
}

/// Rotator speed, radians per unit `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedSpeed {
    pub omega: f64,
}

impl AdjustedSpeed {
    pub fn new(omega: f64) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::invalid_input("rotator speed must be finite"));
        }
        Ok(AdjustedSpeed { omega })
    }
}

/// Physical parameters of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub epsilon: f64,
    pub mu: f64,
    pub coupling: CouplingFunction,
}

/// Outcome of a single standing-assumption check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub message: String,
}

/// Pass/fail report over the standing assumptions (A1) and (A2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl SystemParams {
    pub fn new(epsilon: f64, mu: f64, coupling: CouplingFunction) -> Result<Self> {
        let params = SystemParams {
            epsilon,
            mu,
            coupling,
        };
        let report = validate_assumptions(&params);
        if report.pass() {
            Ok(params)
        } else {
            let bad: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.message.as_str())
                .collect();
            Err(Error::invalid_input(bad.join("; ")))
        }
    }

    /// Construct without validating (A1)/(A2); used by the reporting paths
    /// that want to show the violation rather than reject it.
    pub fn new_unchecked(epsilon: f64, mu: f64, coupling: CouplingFunction) -> Self {
        SystemParams {
            epsilon,
            mu,
            coupling,
        }
    }

    pub fn sqrt_epsilon(&self) -> f64 {
        self.epsilon.sqrt()
    }

    /// Conservative Lipschitz bound on `∇V` from the coupling's coefficient
    /// sums. The stepper's stability policy divides by this.
    pub fn grad_potential_lipschitz(&self) -> f64 {
        let e = self.epsilon;
        let m = self.mu;
        let f0 = self.coupling.l1_bound();
        let fu = self.coupling.l1_bound_u();
        let fv = self.coupling.l1_bound_v();
        let fuu = self.coupling.l1_bound_uu();
        let fuv = self.coupling.l1_bound_uv();
        let fvv = self.coupling.l1_bound_vv();
        // |V_uu| ≤ ε(1 + μ f0) + 2 ε μ fu + 2 ε μ fuu, |V_uv| ≤ ε μ fv + 2 ε μ fuv,
        // |V_vv| ≤ 2 ε μ fvv; take the max row sum of the Hessian bound.
        let vuu = e * (1.0 + m * f0) + 2.0 * e * m * (fu + fuu);
        let vuv = e * m * fv + 2.0 * e * m * fuv;
        let vvv = 2.0 * e * m * fvv;
        (vuu + vuv).max(vuv + vvv).max(1e-12)
    }
}

/// `V(u, v, t) = ε (1 − cos u)(1 − μ f(u, v, t))`.
pub fn potential(params: &SystemParams, u: f64, v: f64, t: f64) -> f64 {
    params.epsilon * (1.0 - u.cos()) * (1.0 - params.mu * params.coupling.eval(u, v, t))
}

/// The gradient `(V_u, V_v)` of the potential.
///
/// `V_u = ε sin u (1 − μ f) − ε μ (1 − cos u) f_u` and
/// `V_v = −ε μ (1 − cos u) f_v`; this is the derivative of `potential` and is
/// cross-checked against central finite differences in the tests.
pub fn grad_potential(params: &SystemParams, u: f64, v: f64, t: f64) -> (f64, f64) {
    let e = params.epsilon;
    let m = params.mu;
    let f = params.coupling.eval(u, v, t);
    let (fu, fv, _) = params.coupling.grad(u, v, t);
    let one_minus_cos = 1.0 - u.cos();
    let vu = e * u.sin() * (1.0 - m * f) - e * m * one_minus_cos * fu;
    let vv = -e * m * one_minus_cos * fv;
    (vu, vv)
}

/// Adjusted Lagrangian density `L_ω = u_t²/2 + (v_t − ω)²/2 + V(u, v, t)`.
pub fn lagrangian_density(
    params: &SystemParams,
    omega: f64,
    u: f64,
    v: f64,
    u_t: f64,
    v_t: f64,
    t: f64,
) -> f64 {
    0.5 * u_t * u_t + 0.5 * (v_t - omega) * (v_t - omega) + potential(params, u, v, t)
}

/// Residual of the Euler–Lagrange equations `(u_tt − V_u, v_tt − V_v)` via
/// centered second differences at interior nodes.
#[derive(Debug, Clone)]
pub struct ElResidual {
    /// Residual in the pendulum component; endpoints zero-filled.
    pub u: Vec<f64>,
    /// Residual in the rotator component; endpoints zero-filled.
    pub v: Vec<f64>,
    /// Indices whose values are zero-filled rather than computed.
    pub zero_filled: Vec<usize>,
}

impl ElResidual {
    /// Sup-norm over the interior (computed) nodes.
    pub fn sup_norm(&self) -> f64 {
        let n = self.u.len();
        let mut m = 0.0f64;
        for i in 1..n.saturating_sub(1) {
            m = m.max(self.u[i].abs()).max(self.v[i].abs());
        }
        m
    }
}

/// Evaluate the Euler–Lagrange residual of a grid trajectory.
pub fn el_residual(params: &SystemParams, q: &Trajectory) -> Result<ElResidual> {
    let n = q.len();
    if n < 3 {
        return Err(Error::invalid_input(
            "el_residual needs at least 3 grid points",
        ));
    }
    let dt2 = q.dt * q.dt;
    let mut ru = vec![0.0; n];
    let mut rv = vec![0.0; n];
    for i in 1..n - 1 {
        let t = q.time(i);
        let (vu, vv) = grad_potential(params, q.u[i], q.v[i], t);
        ru[i] = (q.u[i + 1] - 2.0 * q.u[i] + q.u[i - 1]) / dt2 - vu;
        rv[i] = (q.v[i + 1] - 2.0 * q.v[i] + q.v[i - 1]) / dt2 - vv;
    }
    Ok(ElResidual {
        u: ru,
        v: rv,
        zero_filled: vec![0, n - 1],
    })
}

/// Check the standing assumptions (A1) `sup|f| ≤ 1, sup|f_v| ≤ 1` (by the
/// conservative ℓ¹ bounds) and (A2) `0 ≤ 16 μ ≤ ε ≤ 1`.
pub fn validate_assumptions(params: &SystemParams) -> AssumptionReport {
    let mut checks = Vec::new();
    let f0 = params.coupling.l1_bound();
    checks.push(AssumptionCheck {
        id: "A1.f".into(),
        pass: f0 <= 1.0,
        measured: f0,
        bound: 1.0,
        message: format!("(A1) sum of |amplitudes| = {f0} must be <= 1"),
    });
    let fv = params.coupling.l1_bound_v();
    checks.push(AssumptionCheck {
        id: "A1.fv".into(),
        pass: fv <= 1.0,
        measured: fv,
        bound: 1.0,
        message: format!("(A1) sum of |amplitude * n| = {fv} must be <= 1"),
    });
    let mu_ok = params.mu >= 0.0 && 16.0 * params.mu <= params.epsilon;
    checks.push(AssumptionCheck {
        id: "A2.mu".into(),
        pass: mu_ok,
        measured: 16.0 * params.mu,
        bound: params.epsilon,
        message: format!(
            "(A2) 16*mu = {} must lie in [0, epsilon = {}]",
            16.0 * params.mu,
            params.epsilon
        ),
    });
    let eps_ok = params.epsilon > 0.0 && params.epsilon <= 1.0;
    checks.push(AssumptionCheck {
        id: "A2.eps".into(),
        pass: eps_ok,
        measured: params.epsilon,
        bound: 1.0,
        message: format!("(A2) epsilon = {} must lie in (0, 1]", params.epsilon),
    });
    AssumptionReport { checks }
}
