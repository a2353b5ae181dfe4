//! The pipeline stages. Each stage reads its inputs from the output directory
//! and writes its artifact there.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sos_subspace::anticonc::{build_core_indicator, certify_sample, check_evenness_and_lift};
use sos_subspace::exec::Execution;
use sos_subspace::linalg::frob_dist;
use sos_subspace::oracle::{brute_force_spans, high_intersection_check, to_candidate_list};
use sos_subspace::prooflab::run_suite;
use sos_subspace::rounding::{
    default_large_list_draws, default_vote_draws, list_error, random_baseline, round_by_votes, round_large_list,
    CandidateList, Scheme,
};
use sos_subspace::sample::{generate, DistTag, InstanceConfig, LabeledSample, OutlierStrategy};
use sos_subspace::sos::{
    assemble_sdp, build_constraints, solve_min_norm, validate, PseudoDistribution, SolveStats, SolverOptions,
    ValidationReport,
};

use crate::artifacts::{read_upstream, seeded, write_atomic, write_json};
use crate::config::ExperimentConfig;
use crate::Invalid;

/// Residual tolerance for a solved pseudo-distribution to count as valid.
pub const VALID_TOL: f64 = 1e-5;
pub const EIG_TOL: f64 = 1e-6;
/// Seed offset of the random baseline list.
const BASELINE_SALT: u64 = 0xba5e;

fn instance_for(cfg: &ExperimentConfig, seed: u64) -> InstanceConfig {
    InstanceConfig {
        seed,
        ..cfg.instance.clone()
    }
}

fn load_instance(out: &Path, seed: u64) -> anyhow::Result<LabeledSample> {
    let text = read_upstream(&seeded(out, "instance", seed), "gen")?;
    Ok(LabeledSample::from_json(&text)?)
}

fn load_pseudo(out: &Path, seed: u64) -> anyhow::Result<PseudoDistribution> {
    let text = read_upstream(&seeded(out, "pseudo", seed), "solve")?;
    Ok(PseudoDistribution::from_json(&text)?)
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    for &seed in &cfg.seeds {
        let s = generate(&instance_for(cfg, seed))?;
        let path = seeded(out, "instance", seed);
        write_atomic(&path, s.to_json().as_bytes())?;
        eprintln!("wrote {} ({} points, {} inliers)", path.display(), s.n(), s.inlier_count());
    }
    Ok(())
}

struct Solved {
    pd: PseudoDistribution,
    stats: SolveStats,
    report: ValidationReport,
}

impl Solved {
    fn passed(&self) -> bool {
        self.report.passes(VALID_TOL, EIG_TOL)
    }
}

fn solve_sample(cfg: &ExperimentConfig, s: &LabeledSample, exec: Execution) -> sos_subspace::Result<Solved> {
    let cs = build_constraints(s, &cfg.constraint_options())?;
    let sdp = assemble_sdp(&cs, cfg.relaxation_degree)?;
    let opts = SolverOptions {
        time_budget: Some(Duration::from_secs_f64(cfg.time_budget_secs)),
        exec,
        ..SolverOptions::default()
    };
    let sol = solve_min_norm(&sdp, &opts)?;
    let report = validate(&sol.pd, &cs)?;
    Ok(Solved {
        pd: sol.pd,
        stats: sol.stats,
        report,
    })
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let mut failed = Vec::new();
    for &seed in &cfg.seeds {
        let s = load_instance(out, seed)?;
        let solved = solve_sample(cfg, &s, Execution::Parallel).with_context(|| format!("solving seed {seed}"))?;
        write_atomic(&seeded(out, "pseudo", seed), solved.pd.to_json().as_bytes())?;
        let passed = solved.passed();
        write_json(
            &seeded(out, "validation", seed),
            &json!({
                "seed": seed,
                "degree": cfg.relaxation_degree,
                "passed": passed,
                "report": solved.report,
                "stats": solved.stats,
                "w_means": solved.pd.w_means(),
            }),
        )?;
        eprintln!(
            "seed {seed}: {} iterations, {:.1} s, objective {:.6}, validation {}",
            solved.stats.iterations,
            solved.stats.seconds,
            solved.stats.objective,
            if passed { "ok" } else { "FAILED" }
        );
        if !passed {
            failed.push(seed);
        }
    }
    if !failed.is_empty() {
        return Err(Invalid(format!("pseudo-distribution validation failed for seeds {failed:?}")).into());
    }
    Ok(())
}

fn round_pd(cfg: &ExperimentConfig, pd: &PseudoDistribution, s: &LabeledSample, exec: Execution) -> sos_subspace::Result<(CandidateList, usize)> {
    let r = s.r();
    let seed = s.seed;
    match cfg.rounding.scheme {
        Scheme::LargeList => {
            let t = cfg.rounding.t;
            let draws = cfg.rounding.draws.unwrap_or_else(|| default_large_list_draws(s.alpha, t));
            Ok((round_large_list(pd, t, draws, r, seed, exec)?, draws))
        }
        _ => {
            let draws = cfg.rounding.draws.unwrap_or_else(|| default_vote_draws(s.alpha));
            Ok((round_by_votes(pd, r, draws, seed, exec)?, draws))
        }
    }
}

pub fn round(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    for &seed in &cfg.seeds {
        let s = load_instance(out, seed)?;
        let pd = load_pseudo(out, seed)?;
        let (list, draws) = round_pd(cfg, &pd, &s, Execution::Parallel)?;
        let err = list_error(&list, &s.planted)?;
        write_json(
            &seeded(out, "candidates", seed),
            &json!({
                "seed": seed,
                "scheme": cfg.rounding.scheme.as_str(),
                "t": cfg.rounding.t,
                "draws": draws,
                "list_size": list.len(),
                "list_error": err,
                "candidates": list.to_json_value(Some(&s.planted))?,
            }),
        )?;
        eprintln!("seed {seed}: {} candidates from {draws} draws, list error {err:.4}", list.len());
    }
    Ok(())
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    for &seed in &cfg.seeds {
        let s = load_instance(out, seed)?;
        let m = s.inlier_count();
        let spans = brute_force_spans(&s, s.r(), m, Execution::Parallel)?;
        let list = to_candidate_list(&spans, s.r())?;
        let err = if list.is_empty() { None } else { Some(list_error(&list, &s.planted)?) };
        let mut entries = Vec::with_capacity(spans.len());
        for c in &spans {
            let verdict = high_intersection_check(&c.indices, &c.span_projector, &s)?;
            entries.push(json!({
                "indices": c.indices,
                "inlier_overlap": c.inlier_overlap,
                "projector": c.span_projector.matrix().to_rows(),
                "distance_to_truth": frob_dist(c.span_projector.matrix(), s.planted.matrix())?,
                "verdict": verdict,
            }));
        }
        write_json(
            &seeded(out, "oracle", seed),
            &json!({
                "seed": seed,
                "min_points": m,
                "list_size": list.len(),
                "list_error": err,
                "spans": entries,
            }),
        )?;
        match err {
            Some(e) => eprintln!("seed {seed}: {} spans with >= {m} points, list error {e:.3e}", list.len()),
            None => eprintln!("seed {seed}: no span holds {m} points"),
        }
    }
    Ok(())
}

pub fn verify(out: &Path) -> anyhow::Result<()> {
    let exec = Execution::Parallel;
    let suite = run_suite(exec);
    let ip = build_core_indicator(0.25, 16)?;
    let lift = check_evenness_and_lift(&ip.q, 16, 200, 4, 1);
    let gauss = generate(&InstanceConfig {
        d: 4,
        r: 2,
        n: 2000,
        alpha: 1.0,
        dist_tag: DistTag::Gaussian,
        strategy: OutlierStrategy::DenseNoise,
        seed: 7,
    })?;
    let cert = certify_sample(&gauss, &ip, 200, 7, exec)?;

    let mut failures: Vec<String> = suite
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}: {} of {} trials violated", r.check_name, r.violations, r.trials))
        .collect();
    if !lift.passed() {
        failures.push(format!("indicator lift: residual {:.3e}", lift.max_rel_residual));
    }
    if !cert.certified {
        failures.push("gaussian anti-concentration certificate".into());
    }
    for r in &suite {
        eprintln!(
            "{:<32} {:>7} trials  {:>3} violations  worst margin {:.3e}",
            r.check_name, r.trials, r.violations, r.worst_margin
        );
    }
    eprintln!(
        "indicator delta {} degree {}: C_estimate {:.6}, lift residual {:.1e}, gaussian certified {}",
        ip.delta, ip.degree, ip.c_estimate, lift.max_rel_residual, cert.certified
    );
    write_json(
        &out.join("verify.json"),
        &json!({
            "suite": suite,
            "indicator": {"delta": ip.delta, "degree": ip.degree, "C_estimate": ip.c_estimate, "lift": lift},
            "certificate": cert,
            "failures": failures,
        }),
    )?;
    if !failures.is_empty() {
        return Err(Invalid(format!("verification failed: {}", failures.join("; "))).into());
    }
    Ok(())
}

/// One line of `bench.csv`. Every column except `solve_seconds` is a
/// function of the config alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub alpha: f64,
    pub seed: u64,
    pub scheme: String,
    pub list_size: Option<usize>,
    pub list_error: Option<f64>,
    pub solve_seconds: f64,
    pub status: String,
}

fn status_of(e: &sos_subspace::Error) -> &'static str {
    match e {
        sos_subspace::Error::Timeout { .. } => "timeout",
        sos_subspace::Error::NonConvergence { .. } => "nonconvergence",
        sos_subspace::Error::InfeasibleSdp { .. } => "infeasible",
        _ => "error",
    }
}

fn bench_job(cfg: &ExperimentConfig, alpha: f64, seed: u64, exec: Execution) -> Vec<BenchRow> {
    let scheme = cfg.rounding.scheme.as_str().to_string();
    let start = Instant::now();
    let row = |scheme: &str, size: Option<usize>, err: Option<f64>, secs: f64, status: &str| BenchRow {
        alpha,
        seed,
        scheme: scheme.to_string(),
        list_size: size,
        list_error: err,
        solve_seconds: secs,
        status: status.to_string(),
    };
    let failed = |secs: f64, status: &str| {
        vec![row(&scheme, None, None, secs, status), row(Scheme::Baseline.as_str(), None, None, secs, status)]
    };
    let inst = InstanceConfig {
        alpha,
        seed,
        ..cfg.instance.clone()
    };
    let s = match generate(&inst) {
        Ok(s) => s,
        Err(_) => return failed(0.0, "invalid"),
    };
    let solved = match solve_sample(cfg, &s, exec) {
        Ok(x) => x,
        Err(e) => return failed(start.elapsed().as_secs_f64(), status_of(&e)),
    };
    let secs = solved.stats.seconds;
    if !solved.passed() {
        return failed(secs, "invalid");
    }
    let rounded = round_pd(cfg, &solved.pd, &s, exec).and_then(|(list, _)| {
        let baseline = random_baseline(s.d(), s.r(), list.len(), seed ^ BASELINE_SALT)?;
        Ok((list.len(), list_error(&list, &s.planted)?, baseline.len(), list_error(&baseline, &s.planted)?))
    });
    match rounded {
        Ok((size, err, bsize, berr)) => vec![
            row(&scheme, Some(size), Some(err), secs, "ok"),
            row(Scheme::Baseline.as_str(), Some(bsize), Some(berr), secs, "ok"),
        ],
        Err(e) => failed(secs, status_of(&e)),
    }
}

pub fn bench(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let jobs: Vec<(f64, u64)> = cfg
        .alphas
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    // one level of parallelism: across jobs when there are several
    let inner = if jobs.len() > 1 { Execution::Sequential } else { Execution::Parallel };
    let rows: Vec<BenchRow> = Execution::Parallel
        .map_slice(&jobs, |&(a, s)| bench_job(cfg, a, s, inner))
        .into_iter()
        .flatten()
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let path = out.join("bench.csv");
    write_atomic(&path, &w.into_inner()?)?;
    let bad = rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("wrote {} ({} rows, {bad} not ok)", path.display(), rows.len());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub alpha: f64,
    pub scheme: String,
    pub runs: usize,
    pub ok: usize,
    pub median_list_size: Option<f64>,
    pub median_list_error: Option<f64>,
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(rows: &[BenchRow]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(u64, String), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        // alpha is positive, so its bit pattern orders like the value
        groups.entry((r.alpha.to_bits(), r.scheme.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((bits, scheme), rs)| {
            let ok: Vec<&&BenchRow> = rs.iter().filter(|r| r.status == "ok").collect();
            ReportRow {
                alpha: f64::from_bits(bits),
                scheme,
                runs: rs.len(),
                ok: ok.len(),
                median_list_size: median(ok.iter().filter_map(|r| r.list_size.map(|x| x as f64)).collect()),
                median_list_error: median(ok.iter().filter_map(|r| r.list_error).collect()),
            }
        })
        .collect()
}

pub fn report(out: &Path) -> anyhow::Result<()> {
    let path = out.join("bench.csv");
    let text = read_upstream(&path, "bench")?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<BenchRow> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| Invalid(format!("malformed {}: {e}", path.display())))?;
    let summary = summarize(&rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &summary {
        w.serialize(r)?;
    }
    write_atomic(&out.join("report.csv"), &w.into_inner()?)?;
    println!("{:>6}  {:<10} {:>4} {:>4} {:>10} {:>12}", "alpha", "scheme", "runs", "ok", "list size", "list error");
    for r in &summary {
        let fmt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!(
            "{:>6}  {:<10} {:>4} {:>4} {:>10} {:>12}",
            r.alpha,
            r.scheme,
            r.runs,
            r.ok,
            fmt(r.median_list_size, 1),
            fmt(r.median_list_error, 4)
        );
    }
    Ok(())
}
