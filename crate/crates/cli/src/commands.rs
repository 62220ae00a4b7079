use std::io::Write;
use std::path::Path;
use std::time::Instant;

use qfidkit::capacity::{
    check_conditional_entropy_continuity, check_encoding_irrelevance, check_entropy_continuity,
    coherent_information, maximize_coherent_information, OptimizerConfig,
};
use qfidkit::channels::{channel_zoo, tensor_power, QuantumOperation};
use qfidkit::error::{Error, Result};
use qfidkit::fidelity::{
    check_close_final, check_composition_lemma, check_convexity, check_fe_continuity, TAU_OPT,
};
use qfidkit::linalg::{DensityOperator, Tolerances};
use qfidkit::procedures::{
    check_fcc, check_isometry_extraction, check_three_halves_theorem, extract_isometry,
    rate_accounting, strip_support_with, StrippingEnsemble,
};
use qfidkit::fidelity::MinFidelityConfig;
use qfidkit::random::{isometry_reversal, perturbed_isometry, random_isometry, trial_rng};
use qfidkit::report::{CheckReport, FidelityCheckConfig, SCHEMA_VERSION};
use qfidkit::sources::{typical_subspace, IIDSource};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{CheckArgs, CoherentInfoArgs, ExtractArgs, Lemma, StripArgs, TypicalArgs};
use crate::input;

fn manifest(command: &str, seed: Option<u64>, config: Value, started: Instant) -> Value {
    json!({
        "command": command,
        "seed": seed,
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Parse(format!("cannot write output: {e}"));
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => other.map_err(io_err),
            }
        }
    }
}

fn write_json(out: Option<&Path>, doc: &Value) -> Result<()> {
    write_output(out, &serde_json::to_string_pretty(doc)?)
}

fn run_section(lemma: Lemma, cfg: &FidelityCheckConfig) -> CheckReport {
    match lemma {
        Lemma::Convexity => check_convexity(cfg),
        Lemma::Composition => check_composition_lemma(cfg),
        Lemma::CloseFinal => check_close_final(cfg),
        Lemma::FeContinuity => check_fe_continuity(cfg),
        Lemma::EntropyContinuity => check_entropy_continuity(cfg),
        Lemma::CondEntropyContinuity => check_conditional_entropy_continuity(cfg),
        Lemma::Compression => qfidkit::sources::check_compression_lemma(cfg),
        Lemma::ThreeHalves => check_three_halves_theorem(cfg),
        Lemma::Isometry => check_isometry_extraction(cfg),
        Lemma::Fcc => check_fcc(cfg),
        Lemma::EncodingIrrelevance => check_encoding_irrelevance(cfg),
        Lemma::All => unreachable!("expanded by the caller"),
    }
}

pub fn check(args: &CheckArgs) -> Result<bool> {
    let started = Instant::now();
    let cfg = FidelityCheckConfig::new(args.trials, args.dim, args.seed)?;
    let lemmas: Vec<Lemma> = match args.lemma {
        Lemma::All => Lemma::SECTIONS.to_vec(),
        one => vec![one],
    };
    let sections: Vec<CheckReport> = lemmas.iter().map(|&l| run_section(l, &cfg)).collect();
    let pass = sections.iter().all(|s| s.pass);
    for s in &sections {
        eprintln!(
            "{:<26} {}  evaluated {:>5}  skipped {:>4}  errors {:>3}  min slack {:.3e}",
            s.lemma,
            if s.pass { "pass" } else { "FAIL" },
            s.evaluated,
            s.skipped,
            s.errors,
            s.min_slack
        );
    }
    let summary: Vec<Value> = sections
        .iter()
        .map(|s| {
            json!({
                "lemma": s.lemma,
                "pass": s.pass,
                "min_slack": s.min_slack,
                "max_violation": s.max_violation,
            })
        })
        .collect();
    let mut config = serde_json::to_value(&cfg)?;
    config["lemma"] = json!(args.lemma.name());
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "manifest": manifest("check", Some(args.seed), config, started),
        "pass": pass,
        "summary": summary,
        "sections": sections,
    });
    write_json(args.out.as_deref(), &doc)?;
    Ok(pass)
}

#[derive(Serialize)]
struct CurveRow<'a> {
    channel: &'a str,
    param: f64,
    n: usize,
    value_per_use: f64,
    converged: bool,
    /// `I_c` at the maximally mixed block input, per use.
    feasible_value: f64,
}

pub fn coherent_info(args: &CoherentInfoArgs) -> Result<bool> {
    let params = input::parse_reals(&args.param)?;
    let blocks = input::parse_counts(&args.n)?;
    let cfg = OptimizerConfig {
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    let mut rows = Vec::new();
    for &p in &params {
        let channel = channel_zoo(&args.channel, p)?;
        for &n in &blocks {
            let best = maximize_coherent_information(&channel, n, &cfg)?;
            let block = tensor_power(&channel, n)?;
            let mixed = DensityOperator::maximally_mixed(block.dim_in());
            let feasible = coherent_information(&mixed, &block)?.value / n as f64;
            rows.push(CurveRow {
                channel: &args.channel,
                param: p,
                n,
                value_per_use: best.value_per_use,
                converged: best.converged,
                feasible_value: feasible,
            });
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    let text = String::from_utf8(bytes).expect("csv output is UTF-8");
    write_output(args.out.as_deref(), text.trim_end())?;
    Ok(true)
}

fn spectrum_state(base: Option<&str>, dim: usize) -> Result<DensityOperator> {
    match base {
        Some(text) => {
            let p = input::parse_reals(text)?;
            if p.len() != dim {
                return Err(Error::Shape(format!("--base has {} entries, expected {dim}", p.len())));
            }
            DensityOperator::from_diagonal(&p)
        }
        None => Ok(DensityOperator::maximally_mixed(dim)),
    }
}

fn ensemble_invariants(ensemble: &StrippingEnsemble, rho: &DensityOperator) -> Value {
    let reconstruction_error = (ensemble.reconstruct() - rho.matrix()).norm();
    let total_weight = ensemble.total_weight();
    let lambda_max = rho.eigen().values[0];
    let max_weight = ensemble.weights().into_iter().fold(0.0, f64::max);
    let rank_decrements = ensemble
        .steps
        .iter()
        .enumerate()
        .all(|(i, s)| s.residual_rank == ensemble.len() - i - 1);
    let ordering_drop = ensemble.max_ordering_drop();
    let pass = reconstruction_error < 1e-8
        && (total_weight - 1.0).abs() < 1e-10
        && rank_decrements
        && max_weight <= lambda_max + 1e-10
        && ordering_drop <= TAU_OPT;
    json!({
        "reconstruction_error": reconstruction_error,
        "total_weight": total_weight,
        "rank_decrements_exact": rank_decrements,
        "max_weight": max_weight,
        "lambda_max": lambda_max,
        "max_ordering_drop": ordering_drop,
        "pass": pass,
    })
}

pub fn strip(args: &StripArgs) -> Result<bool> {
    let started = Instant::now();
    let (rho, op, removed, provenance) = match &args.input {
        Some(path) => {
            let doc = input::read_json(path)?;
            let rho = input::density(input::field(&doc, "rho")?)?;
            let op = input::operation(input::field(&doc, "op")?)?;
            let removed = match (args.n, doc.get("n0")) {
                (Some(n), _) => n,
                (None, Some(v)) => v
                    .as_u64()
                    .ok_or_else(|| Error::Parse("`n0` must be a nonnegative integer".into()))?
                    as usize,
                (None, None) => 1,
            };
            (rho, op, removed, json!({ "input": path.display().to_string() }))
        }
        None => {
            let op = channel_zoo(&args.channel, args.param)?;
            let rho = spectrum_state(args.base.as_deref(), op.dim_in())?;
            let removed = args.n.unwrap_or(1);
            let provenance = json!({
                "channel": args.channel,
                "param": args.param,
                "base": args.base,
            });
            (rho, op, removed, provenance)
        }
    };
    let cfg = MinFidelityConfig {
        seed: args.seed,
        ..MinFidelityConfig::default()
    };
    let result = strip_support_with(&rho, &op, removed, &cfg)?;
    let invariants = ensemble_invariants(&result.ensemble, &rho);
    let convexity_gap = result.convexity_gap(&op)?;
    let rate = rate_accounting(&result.ensemble, &rho, result.alpha)?;
    let pass = invariants["pass"].as_bool().unwrap_or(false)
        && convexity_gap >= -TAU_OPT
        && result.gamma <= result.gamma_bound + TAU_OPT
        && rate.holds;
    let mut config = provenance;
    config["n0"] = json!(removed);
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "manifest": manifest("strip", Some(args.seed), config, started),
        "result": result.to_json(),
        "invariants": invariants,
        "convexity_gap": convexity_gap,
        "rate_accounting": rate,
        "pass": pass,
    });
    write_json(args.out.as_deref(), &doc)?;
    Ok(pass)
}

pub fn extract(args: &ExtractArgs) -> Result<bool> {
    let started = Instant::now();
    let (rho, e, a, provenance): (DensityOperator, QuantumOperation, QuantumOperation, Value) = match &args.input {
        Some(path) => {
            let doc = input::read_json(path)?;
            (
                input::density(input::field(&doc, "rho")?)?,
                input::operation(input::field(&doc, "E")?)?,
                input::operation(input::field(&doc, "A")?)?,
                json!({ "input": path.display().to_string() }),
            )
        }
        None => {
            let dc = args.dim.unwrap_or(4);
            if dc < 2 {
                return Err(Error::Precondition("--dim must be at least 2".into()));
            }
            let strength = args.param.unwrap_or(0.0);
            if !(0.0..=1.0).contains(&strength) {
                return Err(Error::ParamOutOfRange {
                    name: "param".into(),
                    value: strength,
                });
            }
            let mut rng = trial_rng(args.seed, 0);
            let v = random_isometry(&mut rng, dc, 2);
            let e = if strength > 0.0 {
                perturbed_isometry(&mut rng, &v, strength, 2)
            } else {
                QuantumOperation::new(vec![v.clone()])?
            };
            let rho = spectrum_state(args.base.as_deref(), 2)?;
            let provenance = json!({
                "fixture": "isometry",
                "dim": dc,
                "param": strength,
                "base": args.base,
            });
            (rho, e, isometry_reversal(&v), provenance)
        }
    };
    let result = extract_isometry(&rho, &e, &a)?;
    let pass = result.guarantee_vacuous || result.guarantee_slack() >= -Tolerances::default().svd;
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "manifest": manifest("extract", Some(args.seed), provenance, started),
        "result": result.to_json(),
        "pass": pass,
    });
    write_json(args.out.as_deref(), &doc)?;
    Ok(pass)
}

pub fn typical(args: &TypicalArgs) -> Result<bool> {
    let started = Instant::now();
    let base = input::parse_reals(&args.base)?;
    let blocks = input::parse_counts(&args.n)?;
    let src = IIDSource::diagonal(&base)?;
    let mut rows = Vec::new();
    let mut pass = true;
    for &n in &blocks {
        let t = typical_subspace(&src, n, args.eps)?;
        let bounds = t.dimension_bounds(args.delta);
        pass &= bounds.upper_holds && bounds.lower_holds;
        rows.push(json!({
            "n": n,
            "weight": t.weight,
            "dim": t.dim(),
            "block_dim": t.block_dim(),
            "log2dim_over_n": if t.dim() == 0 { Value::Null } else { json!((t.dim() as f64).log2() / n as f64) },
            "bounds": bounds,
        }));
    }
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "manifest": manifest(
            "typical",
            None,
            json!({ "base": base, "n": blocks, "eps": args.eps, "delta": args.delta }),
            started,
        ),
        "entropy_rate": src.entropy_rate(),
        "rows": rows,
        "pass": pass,
    });
    write_json(args.out.as_deref(), &doc)?;
    Ok(pass)
}
