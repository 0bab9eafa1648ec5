//! The five pipelines: melnikov-scan, barrier-scan, heteroclinic,
//! shadow-relax and delta1.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use pendrot::barrier::{
    check_s1, heteroclinic_minimizer, MinimizerCurve, MinimizerOptions, SearchBox,
};
use pendrot::diagnostics::{
    balance_audit, parity_count, truncated_action_dissipation_flux, tube_audit, BalanceLedger,
    Parity, TubeCeilings,
};
use pendrot::field::TorusField;
use pendrot::gradientflow::{
    discrete_action, loc_norm_of, rhs, step, ul_norm_of, FlowState, RelaxOptions,
};
use pendrot::melnikov::{check_s2, scan_field};
use pendrot::model::SystemParams;
use pendrot::shadowing::{
    bernoulli_plan, build_jump_plan, build_q0, ramp_plan, validate_plan, with_constant_m, JumpPlan,
    PlanPolicy, PlanSpec, Q0Options,
};

use crate::config::{PipelineSpec, PlanSource};
use crate::orbit::{self, OrbitFile};
use crate::report::{RunReport, Status};
use crate::RunOptions;

pub fn execute(
    params: &SystemParams,
    pipeline: &PipelineSpec,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    match pipeline {
        PipelineSpec::MelnikovScan {
            omega_lo,
            omega_hi,
            n_omega,
            n_t,
            n_v,
        } => melnikov_scan(
            params, *omega_lo, *omega_hi, *n_omega, *n_t, *n_v, opts, report,
        ),
        PipelineSpec::BarrierScan {
            omega_lo,
            omega_hi,
            n_omega,
            n_t,
            n_v,
            minimizer,
        } => barrier_scan(
            params, *omega_lo, *omega_hi, *n_omega, *n_t, *n_v, minimizer, opts, report,
        ),
        PipelineSpec::Heteroclinic {
            omega,
            omega_tilde,
            search_box,
            minimizer,
        } => heteroclinic(
            params,
            *omega,
            *omega_tilde,
            *search_box,
            minimizer,
            opts,
            report,
        ),
        PipelineSpec::ShadowRelax {
            plan,
            minimizer,
            q0,
            relax,
            search_half,
            ceilings,
            policy,
        } => shadow_relax(
            params,
            plan,
            minimizer,
            q0,
            relax,
            *search_half,
            *ceilings,
            policy,
            opts,
            report,
        ),
        PipelineSpec::Delta1 {
            omega,
            omega_tilde,
            search_box,
            e_levels,
            family_dim,
            budget,
            minimizer,
        } => delta1(
            params,
            *omega,
            *omega_tilde,
            *search_box,
            e_levels,
            *family_dim,
            *budget,
            minimizer,
            opts,
            report,
        ),
    }
}

fn write_field_csv(path: &Path, field: &TorusField) -> Result<()> {
    let mut out = String::from("t0,v0,value\n");
    for (t, v, m) in field.csv_rows() {
        out.push_str(&format!("{t:.17e},{v:.17e},{m:.17e}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn melnikov_scan(
    params: &SystemParams,
    omega_lo: f64,
    omega_hi: f64,
    n_omega: usize,
    n_t: usize,
    n_v: usize,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let s2 = check_s2(params, omega_lo, omega_hi, n_omega, n_t, n_v);
    for slice in &s2.per_omega {
        let field = scan_field(params, slice.omega, n_t, n_v);
        let name = format!("melnikov_omega_{:.6}.csv", slice.omega);
        write_field_csv(&opts.out_dir.join(&name), &field)?;
        report.artifacts.push(name);
    }
    report.check(
        "S2.gap",
        s2.delta0_tilde > 0.0,
        s2.delta0_tilde,
        0.0,
        "uniform Melnikov gap 4*Delta~0 must be positive".into(),
    );
    report.check(
        "S2.diameter",
        s2.r * params.epsilon.sqrt() <= 1.0 / 144.0 + 1e-12,
        s2.r * params.epsilon.sqrt(),
        1.0 / 144.0,
        "neighborhood diameter R*sqrt(eps) <= 1/144".into(),
    );
    report.stages = json!({ "s2": s2 });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn barrier_scan(
    params: &SystemParams,
    omega_lo: f64,
    omega_hi: f64,
    n_omega: usize,
    n_t: usize,
    n_v: usize,
    minimizer: &MinimizerOptions,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let s1 = check_s1(params, omega_lo, omega_hi, n_omega, n_t, n_v, minimizer)
        .map_err(|e| anyhow::anyhow!("barrier scan failed: {e}"))?;
    for slice in &s1.per_omega {
        let field = pendrot::barrier::scan_barrier_field(params, slice.omega, n_t, n_v, minimizer)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let name = format!("barrier_omega_{:.6}.csv", slice.omega);
        write_field_csv(&opts.out_dir.join(&name), &field)?;
        report.artifacts.push(name);
    }
    report.check(
        "S1.gap",
        s1.delta0 > 0.0,
        s1.delta0,
        0.0,
        "uniform barrier gap 3*Delta0 must be positive".into(),
    );
    report.check(
        "S1.ceiling",
        s1.delta0 <= s1.delta0_ceiling + 1e-12,
        s1.delta0,
        s1.delta0_ceiling,
        "Delta0 <= 9 sqrt(eps) mu".into(),
    );
    report.stages = json!({ "s1": s1 });
    Ok(())
}

fn write_minimizer_artifacts(
    curve: &MinimizerCurve,
    name: &str,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let orbit_name = format!("{name}.orbit");
    orbit::write(
        &opts.out_dir.join(&orbit_name),
        &OrbitFile {
            trajectory: curve.trajectory.clone(),
            plan_hash: 0,
            s: 0.0,
            step_count: 0,
        },
    )?;
    report.artifacts.push(orbit_name);
    if opts.csv {
        let csv_name = format!("{name}.csv");
        orbit::write_csv(&opts.out_dir.join(&csv_name), &curve.trajectory)?;
        report.artifacts.push(csv_name);
    }
    Ok(())
}

fn heteroclinic(
    params: &SystemParams,
    omega: f64,
    omega_tilde: f64,
    search_box: SearchBox,
    minimizer: &MinimizerOptions,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let curve = heteroclinic_minimizer(params, omega, omega_tilde, search_box, minimizer)
        .map_err(|e| anyhow::anyhow!("heteroclinic construction failed: {e}"))?;
    let res = pendrot::model::el_residual(params, &curve.trajectory)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let defect = curve.c1_defect.unwrap_or(f64::NAN);
    let decay = curve.measured_decay_rate();

    // Comparison-curve certificates travel with the run report, and the
    // curves themselves are exportable as sampled CSV.
    let (z_minus, z_plus) =
        pendrot::separatrix::build_supersub(params).map_err(|e| anyhow::anyhow!("{e}"))?;
    let re = params.epsilon.sqrt();
    let verify_minus = pendrot::separatrix::verify_stationary_supersolution(
        params,
        &z_minus,
        (-20.0 / re, 0.75 / re),
        100_000,
    );
    let verify_plus = pendrot::separatrix::verify_stationary_supersolution(
        params,
        &z_plus,
        (-0.75 / re, 20.0 / re),
        100_000,
    );
    report.check(
        "supersub.certificates",
        verify_minus.pass && verify_plus.pass,
        verify_minus.min_margin.min(verify_plus.min_margin),
        0.0,
        "worst comparison-curve margin over both sides".into(),
    );
    if opts.csv {
        for (curve, name) in [(&z_minus, "z_minus.csv"), (&z_plus, "z_plus.csv")] {
            let (lo, hi) = curve.default_truncation(params.epsilon, params.mu);
            let mut out = String::from("t,value,derivative\n");
            for (t, z, zt) in curve.sample(lo, hi, 2001) {
                out.push_str(&format!("{t:.17e},{z:.17e},{zt:.17e}\n"));
            }
            std::fs::write(opts.out_dir.join(name), out)?;
            report.artifacts.push(name.to_string());
        }
    }
    report.check(
        "heteroclinic.el_residual",
        res.sup_norm() <= 1e-3,
        res.sup_norm(),
        1e-3,
        "Euler-Lagrange residual sup-norm of the glued curve".into(),
    );
    report.check(
        "heteroclinic.c1_defect",
        defect <= 1e-3,
        defect,
        1e-3,
        "C1 defect at the gluing time".into(),
    );
    report.check(
        "heteroclinic.decay",
        decay >= 0.9 * params.epsilon.sqrt() / 2.0,
        decay,
        0.9 * params.epsilon.sqrt() / 2.0,
        "measured exponential decay rate of |u - asymptote|".into(),
    );
    write_minimizer_artifacts(&curve, "heteroclinic", opts, report)?;
    report.stages = json!({
        "anchor": curve.anchor,
        "action": curve.action,
        "boundary_margin": curve.boundary_margin,
        "c1_defect": defect,
        "decay_rate": decay,
        "supersub": { "z_minus": verify_minus, "z_plus": verify_plus },
    });
    Ok(())
}

fn plan_spec_from(source: &PlanSource) -> Result<PlanSpec> {
    match source {
        PlanSource::Explicit { omegas, l_tilde, l } => Ok(PlanSpec {
            omegas: omegas.clone(),
            l_tilde: l_tilde.clone(),
            l: *l,
        }),
        PlanSource::Bernoulli {
            bits,
            first_index,
            omega,
            l,
        } => {
            let parsed: Vec<u8> = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    other => anyhow::bail!("bits string must contain only 0/1, found '{other}'"),
                })
                .collect::<Result<_>>()?;
            let (_, spec) = bernoulli_plan(&parsed, *first_index, *omega, *l)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(spec)
        }
        PlanSource::Ramp {
            omega_minus,
            omega_plus,
            max_step,
            spacing,
        } => ramp_plan(*omega_minus, *omega_plus, *max_step, *spacing)
            .map_err(|e| anyhow::anyhow!("{e}")),
    }
}

/// Melnikov-guided search box: center at the global argmin of a coarse
/// `M_ω` scan (ties broken toward the smallest `(t, v)`).
fn guided_box(params: &SystemParams, omega: f64, half: (f64, f64)) -> SearchBox {
    let field = scan_field(params, omega, 32, 32);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for j in 0..field.n_v {
        for i in 0..field.n_t {
            let (t, v) = field.point(i, j);
            let val = field.at(i, j);
            if (val, t, v) < best {
                best = (val, t, v);
            }
        }
    }
    SearchBox {
        t_center: best.1,
        v_center: best.2,
        t_half: half.0,
        v_half: half.1,
    }
}

#[allow(clippy::too_many_arguments)]
fn shadow_relax(
    params: &SystemParams,
    plan_source: &PlanSource,
    minimizer: &MinimizerOptions,
    q0_opts: &Q0Options,
    relax_opts: &RelaxOptions,
    search_half: (f64, f64),
    ceilings: TubeCeilings,
    policy: &PlanPolicy,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let spec = plan_spec_from(plan_source)?;
    let jumps = spec.jumps();
    let mut heteroclinics: Vec<MinimizerCurve> = Vec::with_capacity(jumps);
    for k in 0..jumps {
        let (om, omt) = (spec.omegas[k], spec.omegas[k + 1]);
        let nb = guided_box(params, 0.5 * (om + omt), search_half);
        let curve = heteroclinic_minimizer(params, om, omt, nb, minimizer)
            .map_err(|e| anyhow::anyhow!("heteroclinic {k} failed: {e}"))?;
        heteroclinics.push(curve);
    }
    let plan =
        build_jump_plan(&spec, &heteroclinics, 0.0, 0.0).map_err(|e| anyhow::anyhow!("{e}"))?;
    let plan: JumpPlan = with_constant_m(plan, params);
    let validation =
        validate_plan(&plan, policy).map_err(|e| anyhow::anyhow!("plan invalid: {e}"))?;
    for w in &validation.warnings {
        report.push("plan.policy", Status::Warn, f64::NAN, f64::NAN, w.clone());
    }

    let q0 =
        build_q0(params, &plan, &heteroclinics, q0_opts).map_err(|e| anyhow::anyhow!("{e}"))?;
    orbit::write(
        &opts.out_dir.join("q0.orbit"),
        &OrbitFile {
            trajectory: q0.clone(),
            plan_hash: plan.layout_hash(),
            s: 0.0,
            step_count: 0,
        },
    )?;
    report.artifacts.push("q0.orbit".into());
    if opts.csv {
        orbit::write_csv(&opts.out_dir.join("q0.csv"), &q0)?;
        report.artifacts.push("q0.csv".into());
    }

    // Relaxation loop with periodic audits.
    let ds = relax_opts
        .ds
        .unwrap_or_else(|| pendrot::gradientflow::default_ds(params));
    let mut state = FlowState::new(q0.clone());
    let mut ledgers: Vec<BalanceLedger> = (0..jumps).map(BalanceLedger::new).collect();
    let mut tube_series = Vec::new();
    let mut parity_series: Vec<(f64, Vec<i64>)> = Vec::new();
    let mut trace = String::from("s,ul_rhs,loc_rhs,action\n");
    let mut parity_warned = false;
    let omega0 = plan.omegas[0];
    loop {
        let audit_due = state.step_count % opts.audit_every == 0;
        let (fu, fv) = rhs(params, &state.q);
        let loc = loc_norm_of(&state.q, &fu, &fv);
        state.last_rhs_norm = loc;
        if audit_due {
            trace.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                state.s,
                ul_norm_of(&state.q, &fu, &fv),
                loc,
                discrete_action(params, omega0, &state.q)
            ));
            for (k, ledger) in ledgers.iter_mut().enumerate() {
                let w = truncated_action_dissipation_flux(params, &plan, &state.q, k)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                ledger.push(state.s, w);
            }
            let tube = tube_audit(params, &plan, &state.q, &q0, ceilings)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            tube_series.push((state.s, tube));
            let mut parities = Vec::with_capacity(jumps);
            for k in 0..jumps {
                let halves = heteroclinics[k]
                    .neighborhood
                    .map(|b| (b.t_half, b.v_half))
                    .unwrap_or((0.5, 0.5));
                let nb = SearchBox {
                    t_center: plan.t_tilde[k],
                    v_center: plan.v_tilde[k],
                    t_half: halves.0,
                    v_half: halves.1,
                };
                match parity_count(&plan, &state.q, k, &nb, 1e-9) {
                    Ok((count, parity)) => parities.push(if parity == Parity::Odd {
                        count as i64
                    } else {
                        -(count as i64)
                    }),
                    Err(e) => {
                        parities.push(i64::MIN);
                        if !parity_warned {
                            report.push(
                                "parity.degenerate",
                                Status::Warn,
                                state.s,
                                f64::NAN,
                                format!("parity audit degenerate at s = {}: {e}", state.s),
                            );
                            parity_warned = true;
                        }
                    }
                }
            }
            parity_series.push((state.s, parities));
        }
        if loc <= relax_opts.tol
            || state.s >= relax_opts.s_max
            || state.step_count >= relax_opts.max_steps
        {
            break;
        }
        state = step(params, &state, ds).map_err(|e| anyhow::anyhow!("{e}"))?;
    }

    // Artifacts.
    std::fs::write(opts.out_dir.join("trace.csv"), &trace)?;
    report.artifacts.push("trace.csv".into());
    let mut balance_summary = Vec::new();
    for ledger in &ledgers {
        let mut csv = String::from("k,s,E,D,F,r\n");
        let residuals: Vec<(f64, f64)>;
        let max_abs;
        if ledger.rows.len() >= 2 {
            let audit = balance_audit(ledger).map_err(|e| anyhow::anyhow!("{e}"))?;
            max_abs = audit.max_abs_residual;
            residuals = audit.residuals;
        } else {
            max_abs = 0.0;
            residuals = ledger.rows.iter().map(|r| (r.s, 0.0)).collect();
        }
        for (row, (_, r)) in ledger.rows.iter().zip(&residuals) {
            csv.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                ledger.k, row.s, row.e, row.d, row.f, r
            ));
        }
        let name = format!("ledger_{}.csv", ledger.k);
        std::fs::write(opts.out_dir.join(&name), csv)?;
        report.artifacts.push(name);
        balance_summary.push(json!({
            "k": ledger.k,
            "max_abs_residual": max_abs,
            "samples": ledger.rows.len(),
        }));
    }
    orbit::write(
        &opts.out_dir.join("final.orbit"),
        &OrbitFile {
            trajectory: state.q.clone(),
            plan_hash: plan.layout_hash(),
            s: state.s,
            step_count: state.step_count,
        },
    )?;
    report.artifacts.push("final.orbit".into());
    if opts.csv {
        orbit::write_csv(&opts.out_dir.join("final.csv"), &state.q)?;
        report.artifacts.push("final.csv".into());
    }

    // Report items.
    let worst_c7 = tube_series.iter().map(|(_, t)| t.c7).fold(0.0f64, f64::max);
    let worst_c8 = tube_series.iter().map(|(_, t)| t.c8).fold(0.0f64, f64::max);
    report.check(
        "tube.c7",
        worst_c7 <= ceilings.c7,
        worst_c7,
        ceilings.c7,
        "worst measured c7 over the audits".into(),
    );
    report.check(
        "tube.c8",
        worst_c8 <= ceilings.c8,
        worst_c8,
        ceilings.c8,
        "worst measured c8 over the audits".into(),
    );
    // After the initial transient the measured tube constants should not
    // grow; a violation is a warning, not a failure (the invariance is
    // exact only for the continuous flow).
    if tube_series.len() >= 4 {
        let skip = tube_series.len() / 4;
        let mut grew = 0.0f64;
        for w in tube_series[skip..].windows(2) {
            grew = grew.max(w[1].1.c7 - w[0].1.c7).max(w[1].1.c8 - w[0].1.c8);
        }
        report.warn_if(
            "tube.monotone",
            grew > 1e-6,
            grew,
            1e-6,
            "largest audit-to-audit growth of the tube constants after the transient".into(),
        );
    }
    let parity_ok = (0..jumps).all(|k| {
        let vals: Vec<i64> = parity_series
            .iter()
            .map(|(_, p)| p[k])
            .filter(|&v| v != i64::MIN)
            .collect();
        !vals.is_empty() && vals.iter().all(|&v| (v < 0) == (vals[0] < 0))
    });
    report.check(
        "parity.constant",
        parity_ok,
        parity_series.len() as f64,
        f64::NAN,
        "intersection parity constant across the audits at every jump".into(),
    );
    report.warn_if(
        "relax.converged",
        state.last_rhs_norm > relax_opts.tol,
        state.last_rhs_norm,
        relax_opts.tol,
        "localized rhs norm at the end of the run".into(),
    );
    report.stages = json!({
        "plan": plan,
        "validation": validation,
        "balance": balance_summary,
        "tube": tube_series.iter().map(|(s, t)| json!({"s": s, "report": t})).collect::<Vec<_>>(),
        "parity": parity_series,
        "final_s": state.s,
        "steps": state.step_count,
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn delta1(
    params: &SystemParams,
    omega: f64,
    omega_tilde: f64,
    search_box: SearchBox,
    e_levels: &[f64],
    family_dim: usize,
    budget: usize,
    minimizer: &MinimizerOptions,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<()> {
    let curve = heteroclinic_minimizer(params, omega, omega_tilde, search_box, minimizer)
        .map_err(|e| anyhow::anyhow!("heteroclinic construction failed: {e}"))?;
    write_minimizer_artifacts(&curve, "delta1_base", opts, report)?;
    let mut estimates = Vec::new();
    for &e in e_levels {
        let est = pendrot::diagnostics::estimate_delta1(params, &curve, e, family_dim, budget)
            .map_err(|err| anyhow::anyhow!("delta1 at level {e} failed: {err}"))?;
        report.check(
            &format!("delta1.defect[{e}]"),
            est.constraint_defect <= 1e-6,
            est.constraint_defect,
            1e-6,
            "level constraint defect of the returned perturbation".into(),
        );
        estimates.push(est);
    }
    report.stages = json!({ "estimates": estimates, "anchor": curve.anchor });
    Ok(())
}
