use serde_json::{json, Value};
use sphere_energy::energy::{energy_integral, two_input_phase_report, PhaseReport};
use sphere_energy::gegenbauer::{self, expand, maclaurin_sign_test, schoenberg_pd_test, VolumeKind};
use sphere_energy::geom::{face_functional, PointConfig};
use sphere_energy::kernel_spec::KernelSpec;
use sphere_energy::measures::{make_named_measure, moments, regular_simplex, MeasureSpec, NamedMeasure, MOMENT_TOL};
use sphere_energy::optimizer::{local_max_certificate, maximize_discrete, psd_empirical, AscentConfig, AscentResult};
use sphere_energy::scalar::binomial;
use sphere_energy::sdp::{identity_check, Identity};

use crate::output::num;
use crate::{
    report, CliError, Command, EnergyArgs, EvalArgs, ExpandArgs, Expectation, GegenbauerCommand, OptimizeArgs, Outcome,
    SignTestArgs, VerifyArgs,
};

/// Monte-Carlo agreement: 3 standard errors plus an absolute floor of 1e-3.
const MC_SIGMAS: f64 = 3.0;
const MC_FLOOR: f64 = 1e-3;
const EXACT_REL_TOL: f64 = 1e-10;

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Energy(_) => "energy",
        Command::Optimize(_) => "optimize",
        Command::Verify(_) => "verify-identity",
        Command::Gegenbauer(_) => "gegenbauer",
        Command::PsdCheck(_) => "psd-check",
        Command::Report(_) => "report",
        Command::Replay(_) => "replay",
    }
}

pub fn dispatch(cmd: &Command, seed: u64) -> Result<Outcome, CliError> {
    match cmd {
        Command::Energy(a) => energy(a, seed),
        Command::Optimize(a) => {
            if a.phase_table {
                phase_table(a, seed)
            } else if let Some(ff) = &a.face_functional {
                face_functional_run(a, ff, seed)
            } else {
                optimize(a, seed)
            }
        }
        Command::Verify(a) => verify(a, seed),
        Command::Gegenbauer(GegenbauerCommand::Expand(a)) => gegenbauer_expand(a),
        Command::Gegenbauer(GegenbauerCommand::SignTest(a)) => sign_test(a),
        Command::Gegenbauer(GegenbauerCommand::Eval(a)) => gegenbauer_eval(a),
        Command::PsdCheck(a) => psd_check(&a.kernel, a.d, a.points, a.tails, a.expect, seed),
        Command::Report(a) => report::report(a),
        Command::Replay(a) => report::replay(a),
    }
}

fn outcome(params: Value, claim: String, pass: Option<bool>, outputs: Value) -> Outcome {
    Outcome { params, claim, pass, outputs, table: None }
}

fn parse_kind(s: &str) -> Result<VolumeKind, CliError> {
    match s.trim() {
        "A" | "a" => Ok(VolumeKind::A),
        "V" | "v" => Ok(VolumeKind::V),
        other => Err(CliError::Usage(format!("kind must be A or V, got `{other}`"))),
    }
}

fn energy(a: &EnergyArgs, seed: u64) -> Result<Outcome, CliError> {
    let spec = KernelSpec::parse(&a.kernel)?;
    let measure: MeasureSpec<f64> = MeasureSpec::parse(&a.measure)?;
    let d = measure.dim();
    let kernel = spec.build::<f64>(Some(d))?;
    let est = energy_integral(&kernel, &measure, a.mc, seed)?;
    let closed = spec.sigma_closed_form(d);
    let check = |reference: f64| {
        if est.exact {
            (est.value - reference).abs() <= EXACT_REL_TOL * reference.abs().max(1.0)
        } else {
            (est.value - reference).abs() <= MC_SIGMAS * est.std_error + MC_FLOOR
        }
    };
    let mut outputs = json!({
        "kernel": kernel.label(),
        "value": est.value,
        "std_error": est.std_error,
        "samples_used": est.samples_used,
        "exact": est.exact,
    });
    if let Some(c) = closed {
        outputs["closed_form"] = json!(c);
        if est.exact {
            outputs["abs_difference"] = json!((est.value - c).abs());
        } else {
            outputs["z_score"] = json!(est.z_score(c));
        }
        outputs["matches_closed_form"] = json!(check(c));
    }
    let pass = a.expect.map(|e| {
        outputs["expected"] = json!(e);
        check(e)
    });
    let claim = match (a.expect, closed) {
        (Some(e), _) => format!("I_K(μ) = {e}"),
        (None, Some(c)) => format!("compare with σ-value {c}"),
        (None, None) => "energy evaluation".into(),
    };
    let params = json!({"kernel": spec.to_json(), "measure": a.measure, "mc": a.mc, "expect": a.expect});
    Ok(outcome(params, claim, pass, outputs))
}

fn ascent_config(a: &OptimizeArgs, seed: u64) -> AscentConfig {
    AscentConfig {
        restarts: a.restarts,
        max_iters: a.max_iters,
        initial_step: a.step,
        backtrack: a.backtrack,
        armijo: a.armijo,
        tol: a.tol,
        seed,
    }
}

fn ascent_json(r: &AscentResult<f64>) -> Value {
    json!({
        "best_energy": r.best_energy,
        "best_restart": r.best_restart,
        "grad_norm": r.grad_norm,
        "iterations": r.iterations,
        "converged": r.converged,
        "discarded_restarts": r.discarded,
        "restart_energies": r.restarts.iter().map(|o| o.energy).collect::<Vec<_>>(),
        "monotone": r.restarts.iter().all(|o| o.monotone),
        "config": r.best_config.to_document(),
    })
}

fn relative_gap(found: f64, target: f64) -> f64 {
    (target - found) / target.abs().max(f64::MIN_POSITIVE)
}

fn optimize(a: &OptimizeArgs, seed: u64) -> Result<Outcome, CliError> {
    let text = a.kernel.as_deref().ok_or_else(|| CliError::Usage("--kernel is required".into()))?;
    let n = a.n.ok_or_else(|| CliError::Usage("--N is required".into()))?;
    let d = a.d.ok_or_else(|| CliError::Usage("--d is required".into()))?;
    let spec = KernelSpec::parse(text)?;
    let kernel = spec.build::<f64>(Some(d))?;
    let cfg = ascent_config(a, seed);
    let r = maximize_discrete(&kernel, n, d, &cfg)?;
    let cert = local_max_certificate(&kernel, &r.best_config, a.certificate_trials, a.certificate_radius, seed)?;
    let known = spec.known_discrete_max(n, d);
    let mut outputs = ascent_json(&r);
    outputs["kernel"] = json!(kernel.label());
    outputs["certificate"] = json!(cert);
    outputs["theoretical_max"] = json!(known);
    let pass = known.map(|t| {
        let gap = relative_gap(r.best_energy, t);
        outputs["gap"] = json!(gap);
        gap.abs() <= a.gap_tol && cert.pass
    });
    let claim = match known {
        Some(t) => format!("max E_K over {n} points on S^{} equals {t}", d - 1),
        None => "exploratory maximization".into(),
    };
    let params = json!({"kernel": spec.to_json(), "N": n, "d": d, "ascent": cfg,
        "certificate_trials": a.certificate_trials, "certificate_radius": a.certificate_radius, "gap_tol": a.gap_tol});
    Ok(outcome(params, claim, pass, outputs))
}

fn face_functional_run(a: &OptimizeArgs, items: &[String], seed: u64) -> Result<Outcome, CliError> {
    let mut j = None;
    let mut s = None;
    let mut d = a.d;
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("face functional: expected key=value, got `{item}`")))?;
        let bad = |what: &str| CliError::Usage(format!("face functional `{k}`: `{v}` is not {what}"));
        match k.trim() {
            "j" => j = Some(v.trim().parse::<usize>().map_err(|_| bad("an integer"))?),
            "s" => s = Some(v.trim().parse::<f64>().map_err(|_| bad("a number"))?),
            "d" => d = Some(v.trim().parse::<usize>().map_err(|_| bad("an integer"))?),
            other => return Err(CliError::Usage(format!("face functional: unknown key `{other}`"))),
        }
    }
    let (j, s, d) = match (j, s, d) {
        (Some(j), Some(s), Some(d)) => (j, s, d),
        _ => return Err(CliError::Usage("face functional needs j=, s= and d=".into())),
    };
    if j == 0 || j > d {
        return Err(CliError::Usage(format!("face functional: need 1 <= j <= d, got j={j}, d={d}")));
    }
    let n = d + 1;
    let k = j + 1;
    // Sum over faces = C(N, k) · mean of A^s over distinct ordered k-tuples.
    let spec = KernelSpec::Volume { kind: VolumeKind::A, k, s, d: Some(d), distinct: true };
    let kernel = spec.build::<f64>(None)?;
    let cfg = ascent_config(a, seed);
    let r = maximize_discrete(&kernel, n, d, &cfg)?;
    let faces: f64 = binomial(n, k);
    let value = faces * r.best_energy;
    let oracle_cfg = PointConfig::new(regular_simplex::<f64>(d)?)?;
    let regular = face_functional(&oracle_cfg, j, s)?;
    let direct = face_functional(&r.best_config, j, s)?;
    let cert = local_max_certificate(&kernel, &r.best_config, a.certificate_trials, a.certificate_radius, seed)?;
    let gap = relative_gap(value, regular);
    let mut outputs = ascent_json(&r);
    outputs["value"] = json!(value);
    outputs["value_direct"] = json!(direct);
    outputs["regular_simplex_value"] = json!(regular);
    outputs["gap"] = json!(gap);
    outputs["certificate"] = json!(cert);
    let pass = gap.abs() <= a.gap_tol && cert.pass;
    let params = json!({"face_functional": {"j": j, "s": s, "d": d}, "ascent": cfg,
        "certificate_trials": a.certificate_trials, "certificate_radius": a.certificate_radius, "gap_tol": a.gap_tol});
    let claim = format!("regular simplex maximizes T_(j={j}, s={s}) in R^{d}");
    Ok(outcome(params, claim, Some(pass), outputs))
}

fn phase_table(a: &OptimizeArgs, seed: u64) -> Result<Outcome, CliError> {
    let d = a.d.unwrap_or(3);
    let kinds = a.kinds.iter().map(|k| parse_kind(k)).collect::<Result<Vec<_>, _>>()?;
    let candidates: Vec<(String, MeasureSpec<f64>)> = [
        ("pair", NamedMeasure::AntipodalPair(d)),
        ("onb", NamedMeasure::OrthonormalBasis(d)),
        ("simplex", NamedMeasure::RegularSimplex(d)),
        ("cross", NamedMeasure::CrossPolytope(d)),
    ]
    .into_iter()
    .map(|(n, m)| Ok((n.to_string(), make_named_measure(m)?)))
    .collect::<Result<_, sphere_energy::Error>>()?;
    let mut reports: Vec<PhaseReport> = Vec::new();
    for kind in &kinds {
        for &s in &a.s {
            reports.push(two_input_phase_report(*kind, s, d, &candidates, a.mc, seed)?);
        }
    }
    let header = ["kind", "s", "d", "rank", "measure", "value", "std_error", "exact"].map(String::from).to_vec();
    let rows = reports
        .iter()
        .flat_map(|r| {
            r.rows.iter().enumerate().map(move |(i, row)| {
                vec![
                    format!("{:?}", r.kind),
                    num(r.s),
                    r.d.to_string(),
                    (i + 1).to_string(),
                    row.name.clone(),
                    num(row.value),
                    num(row.std_error),
                    row.exact.to_string(),
                ]
            })
        })
        .collect();
    let params = json!({"phase_table": true, "kinds": a.kinds, "s": a.s, "d": d, "mc": a.mc});
    let outputs = json!({"tables": reports});
    Ok(Outcome {
        params,
        claim: "two-input energies of σ versus discrete candidates".into(),
        pass: None,
        outputs,
        table: Some((header, rows)),
    })
}

fn verify(a: &VerifyArgs, seed: u64) -> Result<Outcome, CliError> {
    if a.psd {
        let kernel = a.kernel.as_deref().expect("clap enforces --kernel");
        return psd_check(kernel, a.d, a.points, a.tails, Expectation::Consistent, seed);
    }
    if a.moments {
        let text = a.measure.as_deref().expect("clap enforces --measure");
        let m: MeasureSpec<f64> = MeasureSpec::parse(text)?;
        let disc = m
            .as_discrete()
            .ok_or_else(|| CliError::Usage("moment checks need a discrete measure".into()))?;
        let r = moments(disc, MOMENT_TOL);
        let params = json!({"moments": true, "measure": text});
        let claim = "measure is balanced and isotropic".to_string();
        let pass = r.balanced && r.isotropic;
        return Ok(outcome(params, claim, Some(pass), json!(r)));
    }
    let name = a
        .identity
        .as_deref()
        .ok_or_else(|| CliError::Usage("give --identity NAME, --psd --kernel K, or --moments --measure M".into()))?;
    let runs: Vec<(Identity, usize, usize)> = if name == "all" {
        let mut v = Vec::new();
        for id in Identity::ALL {
            if id == Identity::AToVLift {
                v.extend([(id, 2, a.trials.min(100)), (id, 3, a.trials.min(100))]);
            } else {
                v.extend((3..=6).filter(|&d| d >= id.min_dim()).map(|d| (id, d, a.trials)));
            }
        }
        v
    } else {
        let id: Identity = name.parse()?;
        let d = a.d.unwrap_or(id.min_dim().max(3));
        vec![(id, d, a.trials)]
    };
    let reports = runs
        .iter()
        .map(|&(id, d, trials)| identity_check(id, d, trials, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let params = json!({"identity": name, "d": a.d, "trials": a.trials});
    let claim = format!("identity {name} holds to {:e}", sphere_energy::sdp::IDENTITY_TOLERANCE);
    let outputs = if reports.len() == 1 { json!(reports[0]) } else { json!({"checks": reports, "pass": pass}) };
    let header = ["name", "d", "trials", "max_residual", "tolerance", "pass"].map(String::from).to_vec();
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                r.d.to_string(),
                r.trials.to_string(),
                num(r.max_residual),
                num(r.tolerance),
                r.pass.to_string(),
            ]
        })
        .collect();
    Ok(Outcome { params, claim, pass: Some(pass), outputs, table: Some((header, rows)) })
}

fn psd_check(text: &str, d: Option<usize>, points: usize, tails: usize, expect: Expectation, seed: u64) -> Result<Outcome, CliError> {
    let spec = KernelSpec::parse(text)?;
    let kernel = spec.build::<f64>(d)?;
    let r = psd_empirical(&kernel, points, tails, seed)?;
    let want = expect == Expectation::Consistent;
    let params = json!({"kernel": spec.to_json(), "d": kernel.dim(), "points": points, "tails": tails,
        "expect": if want { "consistent" } else { "inconsistent" }});
    let claim = format!("{} is {}k-positive definite", kernel.label(), if want { "" } else { "not " });
    Ok(outcome(params, claim, Some(r.consistent == want), json!(r)))
}

fn gegenbauer_expand(a: &ExpandArgs) -> Result<Outcome, CliError> {
    let s = a.s;
    let f: Box<dyn Fn(f64) -> f64> = match a.potential.as_str() {
        "A" => Box::new(move |t: f64| (2.0 - 2.0 * t).max(0.0).powf(s / 2.0)),
        "V" => Box::new(move |t: f64| (1.0 - t * t).max(0.0).powf(s / 2.0)),
        "frame" => Box::new(|t: f64| t * t),
        other => return Err(CliError::Usage(format!("--potential must be A, V or frame, got `{other}`"))),
    };
    let e = expand(|t| f(t), a.d, a.degree)?;
    let neg = gegenbauer::GegenbauerSeries::new(a.d, e.series.coeffs.iter().map(|c| -c).collect())?;
    let outputs = json!({
        "series": e.series,
        "converged": e.converged,
        "max_change": e.max_change,
        "nodes": e.nodes,
        "positive_definite": schoenberg_pd_test(&e.series, 0),
        "negation_pd_modulo_constant": schoenberg_pd_test(&neg, 1),
    });
    let params = json!({"potential": a.potential, "s": a.s, "d": a.d, "degree": a.degree});
    Ok(outcome(params, "Gegenbauer expansion".into(), None, outputs))
}

fn sign_test(a: &SignTestArgs) -> Result<Outcome, CliError> {
    let kind = parse_kind(&a.kind)?;
    let r = maclaurin_sign_test(a.s, kind)?;
    let params = json!({"kind": a.kind, "s": a.s});
    let claim = format!("Maclaurin coefficients of {:?}^{} are negative past the constant", kind, a.s);
    Ok(outcome(params, claim, Some(r.all_negative_after_constant), json!(r)))
}

fn gegenbauer_eval(a: &EvalArgs) -> Result<Outcome, CliError> {
    let v: f64 = gegenbauer::eval(a.d, a.m, a.t)?;
    let params = json!({"d": a.d, "m": a.m, "t": a.t});
    Ok(outcome(params, "Gegenbauer evaluation".into(), None, json!({"value": v})))
}
