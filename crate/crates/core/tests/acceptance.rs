//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.
//!
//! The standard instance is `d = 4, r = 2, n = 24, α = 0.5` with a second
//! planted subspace, solved at degree 4. Criteria 3 to 6 share the same
//! twenty solves.

use std::sync::Arc;
use std::time::Instant;

use sos_subspace::anticonc::{build_core_indicator, certify_sample, CHECK_GRID};
use sos_subspace::exec::Execution;
use sos_subspace::oracle::{brute_force_spans, high_intersection_check, to_candidate_list};
use sos_subspace::poly::MultiPoly;
use sos_subspace::prooflab::{
    rank_one_chi_square, verify_bounded_variance_hypercube, verify_frobenius_trace_identity,
    verify_powering_identity,
};
use sos_subspace::rounding::{list_error, random_baseline, round_by_votes};
use sos_subspace::sample::{generate, DistTag, InstanceConfig, LabeledSample, OutlierStrategy};
use sos_subspace::sos::{
    assemble_sdp, build_constraints, solve_min_norm, validate, ConstraintOptions, MonomialIndex,
    PseudoDistribution, SolveStats, SolverOptions, ValidationReport, VarLayout,
};

/// Largest `Ẽ[(1/|I|) Σ_{i∈I} w_i ‖Π − Π*‖_F²]` over the twenty solves was
/// 5.75e-9 on the first seeded run; the threshold leaves room for solver
/// tolerance drift.
const FROZEN_CLOSENESS: f64 = 1e-7;
/// Median votes list error was 8.6e-11 on the first seeded run.
const FROZEN_LIST_ERROR: f64 = 1e-6;
/// Seeded Monte Carlo value, reproduced to 1e-6 relative.
const FROZEN_C_ESTIMATE: f64 = 1.174398865669757;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const C: f64 = 10.0;

struct Solved {
    sample: LabeledSample,
    pd: PseudoDistribution,
    stats: SolveStats,
    report: ValidationReport,
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solve_standard(seed: u64) -> Result<Solved, String> {
    let sample = generate(&InstanceConfig::standard(seed)).map_err(|e| e.to_string())?;
    let cs = build_constraints(&sample, &ConstraintOptions::desk()).map_err(|e| e.to_string())?;
    let sdp = assemble_sdp(&cs, 4).map_err(|e| e.to_string())?;
    let sol = solve_min_norm(&sdp, &SolverOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
    let report = validate(&sol.pd, &cs).map_err(|e| e.to_string())?;
    Ok(Solved {
        sample,
        pd: sol.pd,
        stats: sol.stats,
        report,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let powering = verify_powering_identity(8);
    let frob = verify_frobenius_trace_identity(1000, 8, 1, Execution::Parallel);
    let secs = start.elapsed().as_secs_f64();
    check(
        powering.trials == 8 && powering.violations == 0 && frob.trials == 1000 && frob.violations == 0 && secs < 5.0,
        format!(
            "powering t=1..8 exact: {}; frobenius-trace worst residual {:.1e} over {} pairs; {secs:.2} s",
            powering.violations == 0,
            -frob.worst_margin,
            frob.trials
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut inconsistent = 0;
    let mut checks = 0;
    for seed in 1..=50u64 {
        let s = generate(&InstanceConfig {
            n: 16,
            ..InstanceConfig::standard(seed)
        })
        .map_err(|e| e.to_string())?;
        let spans = brute_force_spans(&s, 2, 8, Execution::Parallel).map_err(|e| e.to_string())?;
        let list = to_candidate_list(&spans, 2).map_err(|e| e.to_string())?;
        worst = worst.max(list_error(&list, &s.planted).map_err(|e| e.to_string())?);
        for c in &spans {
            let v = high_intersection_check(&c.indices, &c.span_projector, &s).map_err(|e| e.to_string())?;
            checks += 1;
            inconsistent += usize::from(!v.consistent);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && inconsistent == 0 && secs < 60.0,
        format!("worst oracle error {worst:.1e}; {inconsistent} inconsistent of {checks} checks; {secs:.1} s"),
    )
}

fn criterion_3(first: &Result<Solved, String>) -> Outcome {
    let s = first.as_ref().map_err(|e| e.clone())?;
    let r = &s.report;
    check(
        r.normalization_residual <= 1e-8
            && r.moment_min_eigenvalue >= -1e-6
            && r.max_equality_residual <= 1e-5
            && r.cauchy_schwarz_pairs == 50
            && r.cauchy_schwarz_violations == 0
            && r.holder_pairs == 50
            && r.holder_violations == 0
            && s.stats.seconds < 300.0,
        format!(
            "Ẽ[1]-1 {:.1e}; min eig {:.1e}; eq residual {:.1e}; CS {}/{} and Hölder {}/{} violations; {} iterations in {:.1} s",
            r.normalization_residual,
            r.moment_min_eigenvalue,
            r.max_equality_residual,
            r.cauchy_schwarz_violations,
            r.cauchy_schwarz_pairs,
            r.holder_violations,
            r.holder_pairs,
            s.stats.iterations,
            s.stats.seconds
        ),
    )
}

fn solved_all(solves: &[Result<Solved, String>]) -> Result<Vec<&Solved>, String> {
    solves.iter().map(|s| s.as_ref().map_err(|e| e.clone())).collect()
}

fn criterion_4(solves: &[Result<Solved, String>]) -> Outcome {
    let solved = solved_all(solves)?;
    let mut worst = f64::INFINITY;
    for s in &solved {
        let w = s.pd.w_means();
        let inliers = s.sample.inlier_indices();
        let mass = inliers.iter().map(|&i| w[i]).sum::<f64>() / inliers.len() as f64;
        worst = worst.min(mass);
    }
    let alpha = solved[0].sample.alpha;
    check(
        worst >= alpha - 0.05,
        format!("min over {} seeds of mean inlier weight {worst:.6} (needs >= {:.2})", solved.len(), alpha - 0.05),
    )
}

/// `(1/|I|) Σ_{i∈I} w_i ‖Π − Π*‖_F²` over the pseudo-distribution's variables.
fn closeness_poly(pd: &PseudoDistribution, s: &LabeledSample) -> MultiPoly {
    let layout = pd.layout();
    let vars = pd.variables();
    let d = layout.d;
    let mut frob = MultiPoly::zero(vars);
    for j in 0..d {
        for k in 0..d {
            let (a, b) = if j <= k { (j, k) } else { (k, j) };
            let entry = &MultiPoly::var_at(vars, layout.pi(a, b)) - &MultiPoly::constant(vars, s.planted.matrix().get(j, k));
            frob = &frob + &(&entry * &entry);
        }
    }
    let inliers = s.inlier_indices();
    let mut total = MultiPoly::zero(vars);
    for &i in &inliers {
        total = &total + &(&MultiPoly::var_at(vars, layout.w(i)) * &frob);
    }
    total.scale(1.0 / inliers.len() as f64)
}

fn criterion_5(solves: &[Result<Solved, String>]) -> Outcome {
    let solved = solved_all(solves)?;
    let bound = (4.0 * C * C).powi(2);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut violations = 0;
    for s in &solved {
        let v = s.pd.expect(&closeness_poly(&s.pd, &s.sample)).map_err(|e| e.to_string())?;
        worst = worst.max(v);
        violations += usize::from(v > bound);
    }
    check(
        violations == 0 && worst <= FROZEN_CLOSENESS,
        format!(
            "max closeness {worst:.3e} over {} seeds; bound {bound:.0}; frozen regression {FROZEN_CLOSENESS:.1e}",
            solved.len()
        ),
    )
}

fn criterion_6(solves: &[Result<Solved, String>]) -> Outcome {
    let solved = solved_all(solves)?;
    let mut votes = Vec::new();
    let mut baseline = Vec::new();
    for s in &solved {
        let seed = s.sample.seed;
        let list = round_by_votes(&s.pd, 2, 4, seed, Execution::Parallel).map_err(|e| e.to_string())?;
        votes.push(list_error(&list, &s.sample.planted).map_err(|e| e.to_string())?);
        let base = random_baseline(4, 2, list.len(), seed ^ 0xba5e).map_err(|e| e.to_string())?;
        baseline.push(list_error(&base, &s.sample.planted).map_err(|e| e.to_string())?);
    }
    let (mv, mb) = (median(votes), median(baseline));
    check(
        mv < mb && mv <= FROZEN_LIST_ERROR,
        format!("median list error {mv:.3e} vs random baseline {mb:.3}; frozen threshold {FROZEN_LIST_ERROR:.1e}"),
    )
}

fn criterion_7() -> Outcome {
    let ip = build_core_indicator(0.25, 16).map_err(|e| e.to_string())?;
    let mut sup: f64 = 0.0;
    for k in 0..=CHECK_GRID {
        let x = -0.25 + 0.5 * k as f64 / CHECK_GRID as f64;
        sup = sup.max((ip.eval(x) - 1.0).abs());
    }
    let gauss = generate(&InstanceConfig {
        d: 4,
        r: 2,
        n: 2000,
        alpha: 1.0,
        dist_tag: DistTag::Gaussian,
        strategy: OutlierStrategy::DenseNoise,
        seed: 7,
    })
    .map_err(|e| e.to_string())?;
    let g = certify_sample(&gauss, &ip, 200, 7, Execution::Parallel).map_err(|e| e.to_string())?;
    let cube = generate(&InstanceConfig {
        dist_tag: DistTag::Hypercube,
        ..InstanceConfig::standard(7)
    })
    .map_err(|e| e.to_string())?;
    let h = certify_sample(&cube, &ip, 200, 7, Execution::Parallel).map_err(|e| e.to_string())?;
    let frozen_ok = (ip.c_estimate - FROZEN_C_ESTIMATE).abs() <= 1e-6 * FROZEN_C_ESTIMATE;
    let well_formed = h.cond1_margin.is_finite() && h.cond2_value.is_finite();
    check(
        sup <= 0.25 && frozen_ok && g.certified && well_formed,
        format!(
            "sup|q-1| {sup:.4} on δ-grid; C_estimate {:.6} (frozen {FROZEN_C_ESTIMATE:.6}); gaussian certified {} (mean q² {:.4} <= {:.4}); hypercube report certified={}",
            ip.c_estimate,
            g.certified,
            g.cond2_value,
            g.cond2_threshold(),
            h.certified
        ),
    )
}

fn criterion_8() -> Outcome {
    let bv = verify_bounded_variance_hypercube(8, 50, 8, Execution::Parallel);
    let (m2, m4) = rank_one_chi_square(1_000_000, 8);
    let rel2 = (m2.mean - 2.0).abs() / 2.0;
    let rel4 = (m4.mean - 60.0).abs() / 60.0;
    check(
        bv.report.violations == 0 && bv.report.trials == 50 && rel2 <= 0.01 && rel4 <= 0.01,
        format!(
            "hypercube variance: {} violations of 50; E(x²-1)² = {:.4}, E(x²-1)⁴ = {:.3}",
            bv.report.violations, m2.mean, m4.mean
        ),
    )
}

fn criterion_9() -> Outcome {
    // points 0..3 belong to atom A, 3..6 to atom B
    let layout = VarLayout::new(6, 3);
    let index = Arc::new(MonomialIndex::new(layout.nvars(), 6));
    let atom = |mask: [f64; 6], seed: f64| -> Vec<f64> {
        let mut x = mask.to_vec();
        for j in 0..layout.pi_count() {
            x.push((seed * (j + 1) as f64).sin());
        }
        x
    };
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (pa, seed) in [(0.5, 0.7), (0.3, 1.3), (0.85, 2.9)] {
        let a = atom([1.0, 1.0, 1.0, 0.0, 0.0, 0.0], seed);
        let b = atom([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], seed + 0.5);
        let mix = PseudoDistribution::mixture(layout, index.clone(), 6, &[(pa, a.clone()), (1.0 - pa, b.clone())])
            .map_err(|e| e.to_string())?;
        for (set, target) in [(vec![0], &a), (vec![1, 2], &a), (vec![2, 2], &a), (vec![4], &b), (vec![3, 5], &b)] {
            let cond = mix.reweight(&set).map_err(|e| e.to_string())?;
            let exact = PseudoDistribution::dirac(layout, index.clone(), cond.degree(), target).map_err(|e| e.to_string())?;
            for (u, v) in cond.moments().iter().zip(exact.moments()) {
                worst = worst.max((u - v).abs());
            }
            cases += 1;
        }
    }
    check(worst <= 1e-12, format!("{cases} reweightings, worst moment deviation {worst:.1e}"))
}

fn main() {
    let mut lines = Vec::new();
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed();
        let line = match &out {
            Ok(d) => format!("criterion {id} [{name}]: PASS ({d}) [{:.1?}]", secs),
            Err(d) => format!("criterion {id} [{name}]: FAIL ({d}) [{:.1?}]", secs),
        };
        println!("{line}");
        lines.push((id, out.is_ok(), line));
    };
    run(1, "symbolic identities", &mut criterion_1);
    run(2, "oracle exactness", &mut criterion_2);
    run(7, "anti-concentration certificate", &mut criterion_7);
    run(8, "distributional facts", &mut criterion_8);
    run(9, "reweighting", &mut criterion_9);

    let start = Instant::now();
    let solves: Vec<Result<Solved, String>> = SEEDS.map(solve_standard).collect();
    println!("solved {} standard instances in {:.1?}", solves.len(), start.elapsed());
    for (seed, s) in SEEDS.zip(&solves) {
        match s {
            Ok(s) => println!("  seed {seed}: {} iterations, {:.1} s", s.stats.iterations, s.stats.seconds),
            Err(e) => println!("  seed {seed}: {e}"),
        }
    }
    run(3, "pseudo-distribution validity", &mut || criterion_3(&solves[0]));
    run(4, "inlier weight", &mut || criterion_4(&solves));
    run(5, "frobenius closeness", &mut || criterion_5(&solves));
    run(6, "end-to-end list decoding", &mut || criterion_6(&solves));

    println!();
    lines.sort_by_key(|l| l.0);
    for (_, _, l) in &lines {
        println!("{l}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
