use nalgebra::Matrix2;
use rayon::prelude::*;

use super::constants::{
    beta1, eta0, poc_explicit_bound, select_kinetic_constants, unsplit_conditions, BoundBranch,
    PocConstants,
};
use super::{ExperimentReport, NamedTrace, PocRow, TestOutcome};
use crate::config::{ExperimentConfig, ExperimentKind, GaussianInit};
use crate::dynamics::{
    aggregate_traces, fit_log_linear, linear_quadratic_params, second_moment_bound_check,
    simulate_coupled_kinetic, simulate_coupled_overdamped, simulate_poc_kinetic,
    simulate_poc_overdamped, AggregatedTrace, CouplingTrace, KineticLaw, KineticState,
    NonlinearLaw, QuadraticForm,
};
use crate::energy::{
    check_assumptions, check_kinetic_fields, EnergySpec, Friction, KineticFields, Perturbation,
    Potential,
};
use crate::error::{Error, Result};
use crate::gibbs::{contraction_ratio, picard_iterate, stationarity_residual};
use crate::measures::{
    standard_normal_rows, stream_id, EmpiricalMeasure, GridMeasure1D, Lane, Measure, NoiseStreams,
    RngStream,
};
use crate::wasserstein::delta_d;

/// Rows of the initial clouds handed to the sampled assumption check.
const ASSUMPTION_ROWS: usize = 256;
/// Picard ratios are only meaningful while both steps stay above roundoff.
const RATIO_FLOOR: f64 = 1e-12;

/// Runs the experiment named in the config.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Contraction => run_overdamped_contraction(config),
        ExperimentKind::Poc => run_overdamped_poc(config),
        ExperimentKind::KineticContraction => run_kinetic_contraction(config),
        ExperimentKind::KineticPoc => run_kinetic_poc(config),
        ExperimentKind::FixedPoint => run_fixed_point(config),
        ExperimentKind::KineticConstants => run_kinetic_constants(config),
    }
}

fn energy(config: &ExperimentConfig) -> Result<&EnergySpec> {
    config
        .energy
        .as_ref()
        .ok_or_else(|| Error::MissingField("energy".into()))
}

fn kinetic(config: &ExperimentConfig) -> Result<&KineticFields> {
    config
        .kinetic
        .as_ref()
        .ok_or_else(|| Error::MissingField("kinetic".into()))
}

fn single_size(config: &ExperimentConfig) -> Result<usize> {
    config
        .sizes()
        .first()
        .copied()
        .ok_or_else(|| Error::MissingField("n".into()))
}

fn affine(z: &[f64], g: &GaussianInit) -> Vec<f64> {
    z.iter().map(|z| g.mean + g.sd * z).collect()
}

fn cloud(
    config: &ExperimentConfig,
    replica: u32,
    lane: Lane,
    n: usize,
    g: &GaussianInit,
) -> Result<EmpiricalMeasure> {
    let d = config.dimension;
    EmpiricalMeasure::new(
        d,
        affine(&standard_normal_rows(config.seed, replica, lane, n, d), g),
    )
}

/// Positions from the first `n` rows of `z`, velocities from the next `n`.
fn kinetic_state(
    z: &[f64],
    d: usize,
    pos: &GaussianInit,
    vel: &GaussianInit,
) -> Result<KineticState> {
    let half = z.len() / 2;
    KineticState::new(
        0.0,
        EmpiricalMeasure::new(d, affine(&z[..half], pos))?,
        EmpiricalMeasure::new(d, affine(&z[half..], vel))?,
    )
}

fn overdamped_pair(
    config: &ExperimentConfig,
    replica: u32,
    n: usize,
) -> Result<(EmpiricalMeasure, EmpiricalMeasure)> {
    let d = config.dimension;
    let init = &config.init;
    let za = standard_normal_rows(config.seed, replica, Lane::InitA, n, d);
    let a = EmpiricalMeasure::new(d, affine(&za, &init.a))?;
    let b = if init.b_shares_draws {
        EmpiricalMeasure::new(d, affine(&za, &init.b))?
    } else {
        cloud(config, replica, Lane::InitB, n, &init.b)?
    };
    Ok((a, b))
}

fn kinetic_pair(
    config: &ExperimentConfig,
    replica: u32,
    n: usize,
) -> Result<(KineticState, KineticState)> {
    let d = config.dimension;
    let init = &config.init;
    let za = standard_normal_rows(config.seed, replica, Lane::InitA, 2 * n, d);
    let a = kinetic_state(&za, d, &init.a, &init.velocity_a)?;
    let b = if init.b_shares_draws {
        kinetic_state(&za, d, &init.b, &init.velocity_b)?
    } else {
        let zb = standard_normal_rows(config.seed, replica, Lane::InitB, 2 * n, d);
        kinetic_state(&zb, d, &init.b, &init.velocity_b)?
    };
    Ok((a, b))
}

fn fit_bounds(config: &ExperimentConfig) -> (f64, f64) {
    (
        config.fit_window[0] * config.horizon,
        config.fit_window[1] * config.horizon,
    )
}

fn head(mu: &EmpiricalMeasure, rows: usize) -> EmpiricalMeasure {
    let k = rows.min(mu.len()) * mu.dim();
    EmpiricalMeasure::new(mu.dim(), mu.as_slice()[..k].to_vec()).expect("nonempty prefix")
}

/// Samples the declared constants on a point set and on the given clouds
/// and records one pass flag per declared constant. Kinetic runs do not
/// need `H` to be convex, so they skip the `lambda` flag.
fn assumption_tests(
    report: &mut ExperimentReport,
    config: &ExperimentConfig,
    spec: &EnergySpec,
    clouds: &[&EmpiricalMeasure],
    with_lambda: bool,
) {
    let d = config.dimension;
    let points: Vec<Vec<f64>> = if d == 1 {
        (0..17).map(|k| vec![-4.0 + 0.5 * k as f64]).collect()
    } else {
        let mut rng = RngStream::new(config.seed, stream_id(0, Lane::Auxiliary, 0));
        (0..16)
            .map(|_| (0..d).map(|_| 6.0 * rng.uniform() - 3.0).collect())
            .collect()
    };
    let subs: Vec<EmpiricalMeasure> = clouds.iter().map(|c| head(c, ASSUMPTION_ROWS)).collect();
    let measures: Vec<&dyn Measure> = subs.iter().map(|m| m as &dyn Measure).collect();
    let check = check_assumptions(spec, &points, &measures);
    report.metric("lambda_lower_estimate", check.lambda_lower_estimate);
    report.metric("d2m_estimate", check.d2m_estimate);
    let tol = -1e-9;
    if with_lambda {
        report.tests.push(TestOutcome::at_least(
            "assumption_lambda",
            check.monotonicity_margin,
            tol,
            "sampled monotonicity margin of the declared lambda",
        ));
    }
    report.tests.push(TestOutcome::at_least(
        "assumption_d2m_bound",
        check.d2m_margin,
        tol,
        "sampled margin of the declared second-derivative bound",
    ));
    if let Some(m) = check.dm_lip_margin {
        report.tests.push(TestOutcome::at_least(
            "assumption_dm_lip",
            m,
            tol,
            "sampled Lipschitz margin",
        ));
    }
    if let Some(m) = check.grad_at_origin_margin {
        report.tests.push(TestOutcome::at_least(
            "assumption_grad_at_origin",
            m,
            tol,
            "sampled margin at the origin",
        ));
    }
}

fn moment_test(
    report: &mut ExperimentReport,
    name: &str,
    agg: &AggregatedTrace,
    alpha: f64,
    beta: f64,
) {
    let t = &agg.mean;
    let check = second_moment_bound_check(
        &t.times,
        &t.second_moment_a,
        Some(&agg.se_second_moment_a),
        alpha,
        beta,
    );
    let worst = check.margins.iter().copied().fold(f64::INFINITY, f64::min);
    let holds = check.holds && check.stationary_holds.unwrap_or(true);
    report.tests.push(TestOutcome::new(
        name,
        holds,
        worst,
        0.0,
        format!(
            "Gronwall envelope minus (moment - 3 se); stationary bound {:?}",
            check.stationary_bound
        ),
    ));
}

fn degenerate(report: &mut ExperimentReport) {
    report.tests.push(TestOutcome::new(
        "nondegenerate_trace",
        false,
        0.0,
        0.0,
        "initial states coincide, so the coupled distance is identically zero",
    ));
    report.notes.push("degenerate zero trace".into());
}

pub fn run_overdamped_contraction(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = energy(config)?;
    let declared = spec.declared;
    let n = single_size(config)?;
    let d = config.dimension;
    let params = config.sim_params();
    params.validate()?;
    let traces: Vec<CouplingTrace> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let r = r as u32;
            let (a, b) = overdamped_pair(config, r, n)?;
            let mut noise = NoiseStreams::new(config.seed, r, Lane::Noise, n);
            simulate_coupled_overdamped(&a, &b, spec, &params, &mut noise, true)
        })
        .collect::<Result<_>>()?;
    let agg = aggregate_traces(&traces)
        .ok_or_else(|| Error::InvalidInput("replica traces disagree on times".into()))?;

    let mut report = ExperimentReport::new(config);
    let (a0, b0) = overdamped_pair(config, 0, ASSUMPTION_ROWS.min(n))?;
    assumption_tests(&mut report, config, spec, &[&a0, &b0], true);

    let bound = 2.0 * (declared.lambda - declared.d2m_bound);
    report.theoretical_rate_bound = Some(bound);
    let tol = config.tolerances.rate;
    if agg.mean.is_identically_zero() {
        degenerate(&mut report);
    } else {
        let (lo, hi) = fit_bounds(config);
        let fit = fit_log_linear(&agg.mean.times, &agg.mean.mean_sq_dist, lo, hi);
        let rate = fit.map_or(f64::NAN, |f| f.rate());
        report.fitted_rate = fit.map(|f| f.rate());
        if let Some(f) = fit {
            report.metric("fit_r_squared", f.r_squared);
        }
        report.tests.push(TestOutcome::at_least(
            "decay_rate",
            rate,
            bound * (1.0 - tol),
            format!("fitted rate of E|X-Y|^2 against 2(lambda - |D2|)(1 - {tol})"),
        ));
        if let Some(lq) = linear_quadratic_params(spec).filter(|p| p.a_w == 0.0) {
            let exact = 2.0 * lq.mean_rate();
            report.tests.push(TestOutcome::at_most(
                "closed_form_rate",
                (rate - exact).abs(),
                tol * exact,
                format!("distance of the fitted rate from the Ornstein-Uhlenbeck rate {exact}"),
            ));
        }
        if let Some(w) = &agg.mean.w2_sq {
            let k = bound * (1.0 - tol);
            let worst = agg
                .mean
                .times
                .iter()
                .zip(w)
                .map(|(t, v)| {
                    if w[0] > 0.0 {
                        v / (w[0] * (-k * t).exp())
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            report.tests.push(TestOutcome::at_most(
                "w2_envelope",
                worst,
                1.0 + 1e-9,
                "largest ratio of W2^2(t) to W2^2(0) exp(-rate t)",
            ));
        }
    }
    if let Some(g) = declared.grad_at_origin {
        let c = PocConstants::new(&declared, d, g);
        moment_test(&mut report, "moment_bound", &agg, c.alpha, c.beta);
    } else {
        report
            .notes
            .push("grad_at_origin not declared: moment envelope skipped".into());
    }
    report.traces.push(NamedTrace {
        label: "coupled".into(),
        trace: agg.mean,
    });
    Ok(report)
}

fn scaling_slope(sizes: &[usize], values: &[f64]) -> Option<f64> {
    let ln_n: Vec<f64> = sizes.iter().map(|n| (*n as f64).ln()).collect();
    fit_log_linear(&ln_n, values, f64::NEG_INFINITY, f64::INFINITY).map(|f| f.slope)
}

/// Shared tail of both chaos-propagation runs: table, slope and slope test.
fn poc_table(
    report: &mut ExperimentReport,
    config: &ExperimentConfig,
    spec: &EnergySpec,
    aggs: &[AggregatedTrace],
) {
    let sizes = config.sizes();
    let d = config.dimension;
    for (n, agg) in sizes.iter().zip(aggs) {
        let sup_gap = agg.mean.sup_mean_sq_dist();
        let delta = delta_d(*n, d);
        report.poc_table.push(PocRow {
            n: *n,
            sup_gap,
            delta_d: delta,
            ratio: sup_gap / delta,
        });
    }
    let gaps: Vec<f64> = report.poc_table.iter().map(|r| r.sup_gap).collect();
    let deltas: Vec<f64> = report.poc_table.iter().map(|r| r.delta_d).collect();
    report.fitted_scaling_slope = scaling_slope(&sizes, &gaps);
    report.expected_scaling_slope = scaling_slope(&sizes, &deltas);
    if spec.is_interaction_free() {
        report.notes.push(
            "interaction-free energy: gaps sit at the reference-error floor, slope test skipped"
                .into(),
        );
    } else if sizes.len() < 3 {
        report
            .notes
            .push("fewer than three sizes: slope test skipped".into());
    } else {
        let slope = report.fitted_scaling_slope.unwrap_or(f64::NAN);
        let expected = report.expected_scaling_slope.unwrap_or(f64::NAN);
        let tol = config.tolerances.slope;
        report.tests.push(TestOutcome::new(
            "scaling_slope",
            (slope - expected).abs() <= tol,
            slope,
            expected,
            format!("log-log slope of sup_t gap against n, allowed +-{tol}"),
        ));
    }
    for (n, agg) in sizes.iter().zip(aggs) {
        report.traces.push(NamedTrace {
            label: format!("n{n}"),
            trace: agg.mean.clone(),
        });
    }
}

fn aggregate_groups(traces: &[CouplingTrace], groups: usize) -> Result<Vec<AggregatedTrace>> {
    let r = traces.len() / groups;
    traces
        .chunks(r)
        .map(|c| {
            aggregate_traces(c)
                .ok_or_else(|| Error::InvalidInput("replica traces disagree on times".into()))
        })
        .collect()
}

pub fn run_overdamped_poc(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = energy(config)?;
    let declared = spec.declared;
    let sizes = config.sizes();
    let d = config.dimension;
    let params = config.sim_params();
    params.validate()?;
    let reps = config.replicas;
    let m_ref = config.reference_size();
    let lq = linear_quadratic_params(spec);
    let a = config.init.a;
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|k| (0..reps).map(move |r| (k, r)))
        .collect();
    let traces: Vec<CouplingTrace> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let id = (k * reps + r) as u32;
            let n = sizes[k];
            let init = cloud(config, id, Lane::InitA, n, &a)?;
            let mut noise = NoiseStreams::new(config.seed, id, Lane::Noise, n);
            let law = match lq {
                Some(p) => NonlinearLaw::LinearQuadratic {
                    params: p,
                    mean0: vec![a.mean; d],
                    var0: a.sd * a.sd,
                },
                None => NonlinearLaw::Reference {
                    init: cloud(config, id, Lane::ReferenceInit, m_ref, &a)?,
                    noise: NoiseStreams::new(config.seed, id, Lane::ReferenceNoise, m_ref),
                },
            };
            simulate_poc_overdamped(&init, spec, &params, &mut noise, law)
        })
        .collect::<Result<_>>()?;
    let aggs = aggregate_groups(&traces, sizes.len())?;

    let mut report = ExperimentReport::new(config);
    if lq.is_some() {
        report
            .notes
            .push("linear-quadratic energy: copies driven by the exact Gaussian law".into());
    } else {
        report.metric("reference_size", m_ref as f64);
    }
    let init0 = cloud(config, 0, Lane::InitA, ASSUMPTION_ROWS.min(sizes[0]), &a)?;
    assumption_tests(&mut report, config, spec, &[&init0], true);
    poc_table(&mut report, config, spec, &aggs);

    let b1 = beta1(&declared);
    report.metric("beta1", b1);
    let Some(g) = declared.grad_at_origin else {
        report
            .notes
            .push("grad_at_origin not declared: explicit bound and moment envelope skipped".into());
        return Ok(report);
    };
    let consts = PocConstants::new(&declared, d, g);
    report.metric("alpha", consts.alpha);
    report.metric("beta", consts.beta);
    report.metric("uniform_branch", if consts.uniform() { 1.0 } else { 0.0 });
    for (n, agg) in sizes.iter().zip(&aggs) {
        moment_test(
            &mut report,
            &format!("moment_bound_n{n}"),
            agg,
            consts.alpha,
            consts.beta,
        );
    }
    let fitted_c = aggs
        .iter()
        .zip(&sizes)
        .map(|(agg, n)| {
            let law = agg.mean.law_moment.as_ref()?;
            let w = agg.mean.w2_sq.as_ref()?;
            let sup_law = law.iter().copied().fold(0.0, f64::max);
            let denom = sup_law * delta_d(*n, d);
            Some(w.iter().map(|v| v / denom).fold(0.0, f64::max))
        })
        .try_fold(0.0_f64, |acc, c| c.map(|c| acc.max(c)));
    let Some(c_d) = fitted_c else {
        report
            .notes
            .push("copies-to-law W2 not recorded in this dimension: explicit bound skipped".into());
        return Ok(report);
    };
    report.metric("fitted_c_d", c_d);
    let m0 = d as f64 * (a.mean * a.mean + a.sd * a.sd);
    let mut branch = BoundBranch::Uniform;
    for (n, agg) in sizes.iter().zip(&aggs) {
        let sup_law = agg
            .mean
            .law_moment
            .as_ref()
            .map_or(0.0, |l| l.iter().copied().fold(0.0, f64::max));
        let (bound, b) = poc_explicit_bound(
            &consts,
            &declared,
            c_d,
            m0,
            sup_law,
            delta_d(*n, d),
            config.horizon,
        );
        branch = b;
        report.tests.push(TestOutcome::at_most(
            &format!("explicit_bound_n{n}"),
            agg.mean.sup_mean_sq_dist(),
            bound,
            format!("sup_t gap against the explicit bound ({b:?} branch)"),
        ));
    }
    report.notes.push(format!(
        "bound branch: {}",
        match branch {
            BoundBranch::Uniform => "uniform in time",
            BoundBranch::FiniteHorizon => "finite horizon",
        }
    ));
    Ok(report)
}

/// Feasible constants for a kinetic run, or the violated inequality.
fn kinetic_setup(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
) -> Result<super::KineticConstants> {
    let fields = kinetic(config)?;
    let gamma = config
        .gamma()
        .ok_or_else(|| Error::MissingField("energy.declared.dm_lip".into()))?;
    let consts = select_kinetic_constants(fields, gamma, config.epsilon);
    if !consts.feasible {
        return Err(Error::Infeasible(
            consts.violated.clone().unwrap_or_default(),
        ));
    }
    report.metric("gamma", gamma);
    report.metric("eta", consts.eta);
    report.metric("eta0", consts.eta0);
    report.metric("b", consts.b);
    report.metric("rate_c", consts.rate_c);
    let mut rng = RngStream::new(config.seed, stream_id(0, Lane::Auxiliary, 1));
    let check = check_kinetic_fields(fields, config.dimension, 256, 5.0, &mut rng);
    let worst = check
        .mono_a_margin
        .min(check.lip_a_margin)
        .min(check.lip_d_margin);
    report.tests.push(TestOutcome::new(
        "kinetic_fields_declared",
        check.violations.is_empty(),
        worst,
        0.0,
        "smallest sampled margin of lambda_A, [A]1 and [D]1",
    ));
    report.kinetic_constants = Some(consts.clone());
    Ok(consts)
}

fn linear_part(fields: &KineticFields) -> KineticFields {
    let gamma = match fields.friction {
        Friction::Linear { gamma } | Friction::LinearTanh { gamma, .. } => gamma,
    };
    KineticFields {
        friction: Friction::Linear { gamma },
        lambda_b: fields.lambda_b,
        perturbation: Perturbation::Zero,
        lip_a: gamma,
        mono_a: gamma,
        lip_d: 0.0,
    }
}

/// `E[Q]` along the exact flow `(p, v)' = M (p, v)` of the coupled
/// differences, with `M = [[0, 1], [−λ_B, −γ]]`.
fn linear_oracle(
    a: &KineticState,
    b: &KineticState,
    fields: &KineticFields,
    q: &QuadraticForm,
    times: &[f64],
) -> Vec<f64> {
    let gamma = match fields.friction {
        Friction::Linear { gamma } | Friction::LinearTanh { gamma, .. } => gamma,
    };
    let m = Matrix2::new(0.0, 1.0, -fields.lambda_b, -gamma);
    let dp: Vec<f64> = a
        .positions
        .as_slice()
        .iter()
        .zip(b.positions.as_slice())
        .map(|(x, y)| x - y)
        .collect();
    let dv: Vec<f64> = a
        .velocities
        .as_slice()
        .iter()
        .zip(b.velocities.as_slice())
        .map(|(x, y)| x - y)
        .collect();
    let n = a.len() as f64;
    times
        .iter()
        .map(|t| {
            let e = (m * *t).exp();
            dp.iter()
                .zip(&dv)
                .map(|(p, v)| {
                    let pt = e[(0, 0)] * p + e[(0, 1)] * v;
                    let vt = e[(1, 0)] * p + e[(1, 1)] * v;
                    q.eval(&[pt], &[vt])
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

/// `−2 max Re λ(M)` for `M = [[0, 1], [−λ_B, −γ]]`.
fn linear_eigen_rate(lambda_b: f64, gamma: f64) -> f64 {
    let disc = gamma * gamma - 4.0 * lambda_b;
    let re = if disc < 0.0 {
        -0.5 * gamma
    } else {
        0.5 * (-gamma + disc.sqrt())
    };
    -2.0 * re
}

pub fn run_kinetic_contraction(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = energy(config)?;
    let fields = kinetic(config)?;
    let n = single_size(config)?;
    let params = config.sim_params();
    params.validate()?;
    let mut report = ExperimentReport::new(config);
    let consts = kinetic_setup(config, &mut report)?;
    let q = consts.form;

    let traces: Vec<CouplingTrace> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let r = r as u32;
            let (a, b) = kinetic_pair(config, r, n)?;
            let mut noise = NoiseStreams::new(config.seed, r, Lane::Noise, n);
            simulate_coupled_kinetic(&a, &b, fields, spec, &params, &mut noise, Some(q))
        })
        .collect::<Result<_>>()?;
    let agg = aggregate_traces(&traces)
        .ok_or_else(|| Error::InvalidInput("replica traces disagree on times".into()))?;
    let (a0, _) = kinetic_pair(config, 0, ASSUMPTION_ROWS.min(n))?;
    assumption_tests(&mut report, config, spec, &[&a0.positions], false);

    let bound = 2.0 * consts.rate_c;
    report.theoretical_rate_bound = Some(bound);
    let (lo, hi) = fit_bounds(config);
    let tol = config.tolerances.rate;
    if agg.mean.is_identically_zero() {
        degenerate(&mut report);
    } else {
        let series = agg.mean.q_form.as_ref().expect("form requested");
        let fit = fit_log_linear(&agg.mean.times, series, lo, hi);
        report.fitted_rate = fit.map(|f| f.rate());
        let (slope, r2) = fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r_squared));
        report.tests.push(TestOutcome::new(
            "q_slope_negative",
            slope < 0.0,
            slope,
            0.0,
            "log-linear slope of E[Q]",
        ));
        let r2_min = config.tolerances.r_squared;
        report.tests.push(TestOutcome::new(
            "q_fit_r_squared",
            r2 > r2_min,
            r2,
            r2_min,
            "R^2 of the ln E[Q] fit",
        ));
        report.tests.push(TestOutcome::at_least(
            "q_envelope",
            -slope,
            bound * (1.0 - tol),
            format!("fitted decay rate of E[Q] against 2C(1 - {tol})"),
        ));
    }
    report.traces.push(NamedTrace {
        label: "coupled".into(),
        trace: agg.mean,
    });

    if config.linear_control {
        let lin = linear_part(fields);
        let zero = EnergySpec::two_body(Potential::Zero, Potential::Zero);
        let id = config.replicas as u32;
        let (a, b) = kinetic_pair(config, id, n)?;
        let mut noise = NoiseStreams::new(config.seed, id, Lane::Noise, n);
        let trace = simulate_coupled_kinetic(&a, &b, &lin, &zero, &params, &mut noise, Some(q))?;
        let oracle = linear_oracle(&a, &b, &lin, &q, &trace.times);
        let sim_fit = fit_log_linear(
            &trace.times,
            trace.q_form.as_ref().expect("form requested"),
            lo,
            hi,
        );
        let oracle_fit = fit_log_linear(&trace.times, &oracle, lo, hi);
        let gamma = match lin.friction {
            Friction::Linear { gamma } | Friction::LinearTanh { gamma, .. } => gamma,
        };
        report.metric("linear_eigen_rate", linear_eigen_rate(lin.lambda_b, gamma));
        let (rs, ro) = (
            sim_fit.map_or(f64::NAN, |f| f.rate()),
            oracle_fit.map_or(f64::NAN, |f| f.rate()),
        );
        report.metric("linear_control_rate", rs);
        report.metric("linear_oracle_rate", ro);
        let otol = config.tolerances.oracle;
        report.tests.push(TestOutcome::at_most(
            "linear_control_rate",
            (rs - ro).abs(),
            otol * ro.abs(),
            "fitted E[Q] rate of the linear control against the matrix-exponential flow",
        ));
        report.traces.push(NamedTrace {
            label: "linear_control".into(),
            trace,
        });
    }
    Ok(report)
}

pub fn run_kinetic_poc(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = energy(config)?;
    let fields = kinetic(config)?;
    let sizes = config.sizes();
    let d = config.dimension;
    let params = config.sim_params();
    params.validate()?;
    let reps = config.replicas;
    let m_ref = config.reference_size();
    let mut report = ExperimentReport::new(config);
    kinetic_setup(config, &mut report)?;
    let init = config.init;
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|k| (0..reps).map(move |r| (k, r)))
        .collect();
    let traces: Vec<CouplingTrace> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let id = (k * reps + r) as u32;
            let n = sizes[k];
            let z = standard_normal_rows(config.seed, id, Lane::InitA, 2 * n, d);
            let start = kinetic_state(&z, d, &init.a, &init.velocity_a)?;
            let zr = standard_normal_rows(config.seed, id, Lane::ReferenceInit, 2 * m_ref, d);
            let law = KineticLaw::Reference {
                init: kinetic_state(&zr, d, &init.a, &init.velocity_a)?,
                noise: NoiseStreams::new(config.seed, id, Lane::ReferenceNoise, m_ref),
            };
            let mut noise = NoiseStreams::new(config.seed, id, Lane::Noise, n);
            simulate_poc_kinetic(&start, fields, spec, &params, &mut noise, law)
        })
        .collect::<Result<_>>()?;
    let aggs = aggregate_groups(&traces, sizes.len())?;
    report.metric("reference_size", m_ref as f64);
    let z0 = standard_normal_rows(
        config.seed,
        0,
        Lane::InitA,
        2 * ASSUMPTION_ROWS.min(sizes[0]),
        d,
    );
    let s0 = kinetic_state(&z0, d, &init.a, &init.velocity_a)?;
    assumption_tests(&mut report, config, spec, &[&s0.positions], false);
    poc_table(&mut report, config, spec, &aggs);

    let tol = config.tolerances.plateau;
    let half = 0.5 * config.horizon;
    for (n, agg) in sizes.iter().zip(&aggs) {
        let law = agg.mean.law_moment.as_ref().expect("recorded");
        let mut late: Vec<f64> = agg
            .mean
            .times
            .iter()
            .zip(law)
            .filter(|(t, _)| **t >= half - 1e-12)
            .map(|(_, m)| *m)
            .collect();
        late.sort_by(f64::total_cmp);
        let median = if late.len() % 2 == 1 {
            late[late.len() / 2]
        } else {
            0.5 * (late[late.len() / 2 - 1] + late[late.len() / 2])
        };
        let spread = late.iter().map(|m| (m - median).abs()).fold(0.0, f64::max) / median;
        report.tests.push(TestOutcome::at_most(
            &format!("moment_plateau_n{n}"),
            spread,
            tol,
            "largest relative deviation from the median of E(|p|^2+|v|^2) over [T/2, T]",
        ));
    }
    Ok(report)
}

fn gaussian_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Two-component Gaussian mixture on the config grid with random weight,
/// means in `[−3, 3]` and standard deviations in `[0.5, 1.5]`.
fn random_mixture(config: &ExperimentConfig, rng: &mut RngStream) -> Result<GridMeasure1D> {
    let w = 0.2 + 0.6 * rng.uniform();
    let (m1, m2) = (6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0);
    let (s1, s2) = (0.5 + rng.uniform(), 0.5 + rng.uniform());
    let g = config.grid;
    GridMeasure1D::from_fn(g.lo, g.hi, g.m, |x| {
        w * gaussian_density(x, m1, s1) + (1.0 - w) * gaussian_density(x, m2, s2)
    })
}

pub fn run_fixed_point(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = energy(config)?;
    let fp_cfg = config.fixed_point;
    let g = config.grid;
    let mut report = ExperimentReport::new(config);
    let mu0 = GridMeasure1D::gaussian(g.lo, g.hi, g.m, fp_cfg.start.mean, fp_cfg.start.sd)?;
    let hist = picard_iterate(spec, &mu0, fp_cfg.tol, fp_cfg.max_iter)?;
    let last_step = hist.step_distances.last().copied().unwrap_or(f64::NAN);
    report.tests.push(TestOutcome::new(
        "picard_converged",
        hist.converged,
        last_step,
        fp_cfg.tol,
        format!("W1 step after {} maps", hist.step_distances.len()),
    ));
    let fp = hist.fixed_point();
    report.metric("iterations", hist.step_distances.len() as f64);
    report.metric("fixed_point_mean", fp.mean());
    report.metric("fixed_point_variance", fp.variance());
    let usable = hist
        .ratio_estimates
        .iter()
        .zip(&hist.step_distances[1..])
        .filter(|(_, s)| **s > RATIO_FLOOR)
        .map(|(r, _)| *r)
        .fold(f64::NAN, f64::max);
    report.metric("max_picard_ratio", usable);
    let residual = stationarity_residual(spec, fp)?;
    report.tests.push(TestOutcome::at_most(
        "stationarity_residual",
        residual,
        fp_cfg.residual_tol,
        "sup of |d/dx ln rho + D_mH| at the fixed point",
    ));
    if let Some(lq) = linear_quadratic_params(spec) {
        let exact_var = 1.0 / lq.deviation_rate();
        let exact_mean = -lq.b_v / lq.mean_rate();
        report.metric("closed_form_variance", exact_var);
        report.metric("closed_form_mean", exact_mean);
        report.tests.push(TestOutcome::at_most(
            "fixed_point_variance",
            (fp.variance() - exact_var).abs(),
            fp_cfg.variance_tol,
            format!("distance to the closed-form variance {exact_var}"),
        ));
    }
    if fp_cfg.ratio_pairs > 0 {
        let declared = spec.declared;
        if declared.lambda <= 0.0 {
            return Err(Error::Config {
                path: "energy.declared.lambda".into(),
                message: "the contraction-ratio check needs a positive lambda".into(),
            });
        }
        let envelope = declared.d2m_bound / declared.lambda;
        let ratios: Vec<f64> = (0..fp_cfg.ratio_pairs)
            .into_par_iter()
            .map(|k| {
                let mut rng =
                    RngStream::new(config.seed, stream_id(0, Lane::Auxiliary, 1000 + k as u32));
                let mu = random_mixture(config, &mut rng)?;
                let nu = random_mixture(config, &mut rng)?;
                contraction_ratio(spec, &mu, &nu)
            })
            .collect::<Result<_>>()?;
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        report.metric("ratio_envelope", envelope);
        report.tests.push(TestOutcome::at_most(
            "contraction_ratio_envelope",
            worst,
            envelope + fp_cfg.ratio_slack,
            format!(
                "largest W1(Phi mu, Phi nu)/W1(mu, nu) over {} pairs against |D2|/lambda + {}",
                fp_cfg.ratio_pairs, fp_cfg.ratio_slack
            ),
        ));
    }
    report.picard = Some(hist);
    Ok(report)
}

pub fn run_kinetic_constants(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let fields = kinetic(config)?;
    let gamma = config
        .gamma()
        .ok_or_else(|| Error::MissingField("gamma".into()))?;
    let consts = select_kinetic_constants(fields, gamma, config.epsilon);
    let (root, cap, _) = eta0(fields.lip_a, fields.mono_a, fields.lambda_b);
    let mut report = ExperimentReport::new(config);
    report.metric("gamma", gamma);
    report.metric("eta", consts.eta);
    report.metric("eta0", consts.eta0);
    report.metric("eta0_root", root);
    report.metric("eta0_cap", cap);
    report.metric("epsilon", consts.epsilon);
    report.metric("window_lo", consts.window.0);
    report.metric("window_hi", consts.window.1);
    report.tests.push(TestOutcome::new(
        "eta_below_eta0",
        consts.eta < consts.eta0,
        consts.eta,
        consts.eta0,
        "feasibility threshold",
    ));
    report.tests.push(TestOutcome::new(
        "b_window_nonempty",
        consts.window.0 < consts.window.1,
        consts.window.1 - consts.window.0,
        0.0,
        format!("window ({}, {})", consts.window.0, consts.window.1),
    ));
    if consts.feasible {
        report.metric("b", consts.b);
        report.metric("rate_c", consts.rate_c);
        report.metric("slack_p", consts.slack_p);
        report.metric("slack_v", consts.slack_v);
        let (u1, u2) = unsplit_conditions(fields, gamma, consts.b);
        report.metric("unsplit_condition_p", u1);
        report.metric("unsplit_condition_v", u2);
        let lb = fields.lambda_b * consts.b * consts.b;
        report.tests.push(TestOutcome::at_least(
            "form_positive_definite",
            lb,
            1.0 + f64::EPSILON,
            "lambda_B b^2",
        ));
    } else if let Some(why) = &consts.violated {
        report.notes.push(format!("infeasible: {why}"));
    }
    report.kinetic_constants = Some(consts);
    Ok(report)
}
