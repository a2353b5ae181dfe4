//! Numerical and symbolic checks of the inequalities behind the SoS
//! arguments, each at the level where it is literally true.
//!
//! Every check returns a [`Report`] whose contract is `violations == 0`.
//! `worst_margin` is the smallest observed slack (conclusion minus bound,
//! relative where noted); identities report minus the largest residual.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::exec::{stream_rng, Execution};
use crate::gauss::{Estimate, WeightedGaussian};
use crate::linalg::{frob_trace_identity_residual, Projector};
use crate::poly::{variables, MultiPoly};
use crate::sos::constraints::random_unit_symmetric;
use crate::sos::pseudo::{cauchy_schwarz_pairs, holder_pairs};
use crate::sos::PseudoDistribution;

/// Relative slack for floating-point inequality checks.
pub const REL_TOL: f64 = 1e-12;
/// Hypercontractivity constant checked against Gaussian moments.
pub const HYPER_C: f64 = 10.0;
/// Residual bound for the Frobenius-trace identity.
pub const FROB_TRACE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub check_name: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

impl Report {
    fn new(name: &str) -> Self {
        Self {
            check_name: name.to_string(),
            trials: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Records one trial whose slack is `margin`; `ok` decides the verdict.
    fn record(&mut self, margin: f64, ok: bool) {
        self.trials += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if !ok {
            self.violations += 1;
        }
    }

    fn merge(&mut self, other: Report) {
        self.trials += other.trials;
        self.violations += other.violations;
        self.worst_margin = self.worst_margin.min(other.worst_margin);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `(rhs − lhs) / max(|lhs|, |rhs|)`, zero when both vanish.
fn rel_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// `(a − b) Σ_{i<t} a^{t−1−i} b^i = a^t − b^t`, coefficient-exact for
/// `t = 1..=t_max`.
pub fn verify_powering_identity(t_max: usize) -> Report {
    let vars = variables(&["a", "b"]);
    let a = MultiPoly::var_at(&vars, 0);
    let b = MultiPoly::var_at(&vars, 1);
    let mut report = Report::new("powering_identity");
    for t in 1..=t_max as u32 {
        let mut sum = MultiPoly::zero(&vars);
        for i in 0..t {
            sum = &sum + &(&a.pow(t - 1 - i) * &b.pow(i));
        }
        let lhs = &(&a - &b) * &sum;
        let rhs = &a.pow(t) - &b.pow(t);
        let diff = lhs.max_coeff_diff(&rhs).expect("shared variables");
        report.record(-diff, lhs == rhs);
    }
    report
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |k| lo + k as f64 * step)
}

/// On `grid × grid` points of `[0, 3]²` and `t ∈ {2, 4, 8}`:
/// `a^t <= 1, a >= 0 ⇒ a <= 1` and `a^t <= C a^{t−1} ⇒ a^{2t} <= C^{2t}`.
/// Only points satisfying the hypotheses count as trials.
pub fn verify_scalar_cancellation(points: usize) -> Report {
    let mut report = Report::new("scalar_cancellation");
    for t in [2i32, 4, 8] {
        for a in grid(0.0, 3.0, points) {
            if a.powi(t) <= 1.0 {
                report.record(1.0 - a, a <= 1.0);
            }
            for c in grid(0.0, 3.0, points) {
                if a.powi(t) <= c * a.powi(t - 1) {
                    let (lhs, rhs) = (a.powi(2 * t), c.powi(2 * t));
                    let m = rel_margin(lhs, rhs);
                    report.record(m, m >= -REL_TOL);
                }
            }
        }
    }
    report
}

/// Hölder on Boolean weights:
/// `((1/n) Σ w_i f_i)^k <= ((1/n) Σ w_i)^{k−1} (1/n) Σ f_i^k`
/// for `w` uniform on `{0,1}^n` and `f ~ N(0, I_n)`. `k` must be an even
/// power of two.
pub fn verify_holder_boolean(n: usize, k: u32, trials: usize, seed: u64, exec: Execution) -> Report {
    assert!(k >= 2 && k.is_power_of_two(), "k must be a power of two >= 2");
    let margins = exec.map_range(trials, |j| {
        let mut rng = stream_rng(seed, j as u64);
        let w: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        holder_margin(&w, &f, k)
    });
    let mut report = Report::new("holder_boolean");
    for m in margins {
        report.record(m, m >= -REL_TOL);
    }
    report
}

/// Relative slack of the Boolean Hölder inequality for one `(w, f)`.
pub fn holder_margin(w: &[f64], f: &[f64], k: u32) -> f64 {
    let n = w.len() as f64;
    let wf: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / n;
    let ws: f64 = w.iter().sum::<f64>() / n;
    let fk: f64 = f.iter().map(|x| x.powi(k as i32)).sum::<f64>() / n;
    rel_margin(wf.powi(k as i32), ws.powi(k as i32 - 1) * fk)
}

/// `(a + b)^{2t} <= 2^{2t} (a^{2t} + b^{2t})` for `t = 1..=t_max` on random
/// pairs spread over four orders of magnitude.
pub fn verify_almost_triangle(t_max: usize, trials: usize, seed: u64, exec: Execution) -> Report {
    let per_trial = exec.map_range(trials, |j| {
        let mut rng = stream_rng(seed, j as u64);
        let scale = |rng: &mut rand_chacha::ChaCha8Rng| 10f64.powf(rng.random_range(-2.0..2.0));
        let a: f64 = rng.sample::<f64, _>(StandardNormal) * scale(&mut rng);
        let b: f64 = rng.sample::<f64, _>(StandardNormal) * scale(&mut rng);
        (1..=t_max as i32)
            .map(|t| almost_triangle_margin(a, b, t))
            .fold(f64::INFINITY, f64::min)
    });
    let mut report = Report::new("almost_triangle");
    for m in per_trial {
        report.record(m, m >= -REL_TOL);
    }
    report
}

pub fn almost_triangle_margin(a: f64, b: f64, t: i32) -> f64 {
    let lhs = (a + b).powi(2 * t);
    let rhs = 4f64.powi(t) * (a.powi(2 * t) + b.powi(2 * t));
    rel_margin(lhs, rhs)
}

/// `Var(xᵀQx)` for `x` uniform on `{−1, 1}^d`, by enumeration.
pub fn hypercube_variance(q: &DMatrix<f64>) -> f64 {
    let d = q.nrows();
    assert!(d <= 20, "enumeration over 2^{d} points");
    let total = 1usize << d;
    let mut x = DVector::<f64>::zeros(d);
    let values: Vec<f64> = (0..total)
        .map(|bits| {
            for i in 0..d {
                x[i] = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
            }
            x.dot(&(q * &x))
        })
        .collect();
    let mean = values.iter().sum::<f64>() / total as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total as f64
}

/// `Σ_{i≠j} (Q_ij + Q_ji)² / 2`.
pub fn hypercube_variance_closed_form(q: &DMatrix<f64>) -> f64 {
    let d = q.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += (q[(i, j)] + q[(j, i)]).powi(2);
            }
        }
    }
    s / 2.0
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundedVarianceReport {
    #[serde(flatten)]
    pub report: Report,
    /// Largest `|enumerated − closed form|` relative to `‖Q‖_F²`.
    pub closed_form_residual: f64,
}

/// `Var(xᵀQx) <= 3 ‖Q‖_F²` on the hypercube for `trials` random symmetric
/// Gaussian `Q`, by exact enumeration.
pub fn verify_bounded_variance_hypercube(d: usize, trials: usize, seed: u64, exec: Execution) -> BoundedVarianceReport {
    assert!(d <= 12, "d = {d} exceeds the enumeration limit 12");
    let results = exec.map_range(trials, |j| {
        let mut rng = stream_rng(seed, j as u64);
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let q = (&g + g.transpose()) * 0.5;
        let fro2 = q.norm_squared();
        let var = hypercube_variance(&q);
        let closed = hypercube_variance_closed_form(&q);
        (rel_margin(var, 3.0 * fro2), (var - closed).abs() / fro2)
    });
    let mut report = Report::new("bounded_variance_hypercube");
    let mut closed_form_residual: f64 = 0.0;
    for (m, res) in results {
        report.record(m, m >= -REL_TOL);
        closed_form_residual = closed_form_residual.max(res);
    }
    BoundedVarianceReport {
        report,
        closed_form_residual,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypercontractivityReport {
    #[serde(flatten)]
    pub report: Report,
    pub c: f64,
    /// Largest `E p⁴ / (E p²)²` over the sampled `Q`.
    pub max_ratio: f64,
    /// Second-moment cross-checks against `2 ‖Q‖_F²` outside 3 standard
    /// errors.
    pub second_moment_mismatches: usize,
}

/// Centered second and fourth moments of `xᵀQx − Tr Q` under the weighted
/// Gaussian sample.
pub fn centered_moments(g: &WeightedGaussian, q: &DMatrix<f64>) -> (Estimate, Estimate) {
    let tr = q.trace();
    let d = q.nrows();
    let p = |x: &[f64]| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += x[i] * q[(i, j)] * x[j];
            }
        }
        s - tr
    };
    (g.expect(|x| p(x).powi(2)), g.expect(|x| p(x).powi(4)))
}

/// `E p⁴ <= (2C)² (E p²)²` for `p = xᵀQx − Tr Q`, `x ~ N(0, I_d)`, over
/// `trials` random unit-Frobenius `Q`, with 3-standard-error slack.
pub fn verify_hypercontractivity_gaussian(
    d: usize,
    trials: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> HypercontractivityReport {
    let g = WeightedGaussian::draw(d, samples, seed);
    let bound = (2.0 * HYPER_C).powi(2);
    let results = exec.map_range(trials, |j| {
        let q = random_unit_symmetric(d, &mut stream_rng(seed ^ 0x4c1d, j as u64));
        let (m2, m4) = centered_moments(&g, &q);
        let exact2 = 2.0 * q.norm_squared();
        let ok = m4.mean - 3.0 * m4.std_err <= bound * m2.mean.powi(2);
        let mismatch = (m2.mean - exact2).abs() > 3.0 * m2.std_err;
        (rel_margin(m4.mean, bound * m2.mean.powi(2)), ok, m4.mean / m2.mean.powi(2), mismatch)
    });
    let mut report = Report::new("hypercontractivity_gaussian");
    let mut max_ratio: f64 = 0.0;
    let mut second_moment_mismatches = 0;
    for (m, ok, ratio, mismatch) in results {
        report.record(m, ok && !mismatch);
        max_ratio = max_ratio.max(ratio);
        second_moment_mismatches += mismatch as usize;
    }
    HypercontractivityReport {
        report,
        c: HYPER_C,
        max_ratio,
        second_moment_mismatches,
    }
}

/// Monte Carlo `E (x₁² − 1)²` and `E (x₁² − 1)⁴` (exact values 2 and 60).
pub fn rank_one_chi_square(samples: usize, seed: u64) -> (Estimate, Estimate) {
    let g = WeightedGaussian::draw(1, samples, seed);
    let mut q = DMatrix::zeros(1, 1);
    q[(0, 0)] = 1.0;
    centered_moments(&g, &q)
}

/// `|‖P − Q‖_F² − 2 Tr((I − P) Q (I − P))| <= 1e−9` for random equal-rank
/// projector pairs with `2 <= d <= d_max`.
pub fn verify_frobenius_trace_identity(pairs: usize, d_max: usize, seed: u64, exec: Execution) -> Report {
    assert!(d_max >= 2);
    let residuals = exec.map_range(pairs, |j| {
        let mut rng = stream_rng(seed, j as u64);
        let d = rng.random_range(2..=d_max);
        let r = rng.random_range(1..d);
        let p = Projector::random(d, r, &mut rng).expect("valid rank");
        let q = Projector::random(d, r, &mut rng).expect("valid rank");
        frob_trace_identity_residual(&p, &q)
    });
    let mut report = Report::new("frobenius_trace_identity");
    for res in residuals {
        report.record(-res, res <= FROB_TRACE_TOL);
    }
    report
}

/// Pseudo-Cauchy-Schwarz on random pairs over the moment-matrix basis and
/// pseudo-Hölder at `t = 2` with squares of random linear forms, `trials`
/// pairs each. Margins are absolute, with slack `1e−6`.
pub fn verify_pseudo_axioms(pd: &PseudoDistribution, trials: usize, seed: u64) -> Report {
    let moment = pd.moment_matrix();
    let (cs_viol, cs_margin) = cauchy_schwarz_pairs(&moment, trials, seed);
    let mut report = Report::new("pseudo_axioms");
    report.trials = trials;
    report.violations = cs_viol;
    report.worst_margin = cs_margin;
    if pd.degree() >= 4 {
        let (h_viol, h_margin) = holder_pairs(pd, &moment, trials, seed ^ 0x401d);
        report.merge(Report {
            check_name: String::new(),
            trials,
            violations: h_viol,
            worst_margin: h_margin,
        });
    }
    report
}

/// Default parameters of the suite run by `verify`.
pub const SUITE_SEED: u64 = 0x9a0f;

/// Every pseudo-distribution-free check at its default size.
pub fn run_suite(exec: Execution) -> Vec<Report> {
    let bounded = verify_bounded_variance_hypercube(8, 50, SUITE_SEED, exec);
    let hyper = verify_hypercontractivity_gaussian(4, 20, 1_000_000, SUITE_SEED, exec);
    vec![
        verify_powering_identity(8),
        verify_scalar_cancellation(100),
        verify_holder_boolean(20, 4, 10_000, SUITE_SEED, exec),
        verify_almost_triangle(4, 10_000, SUITE_SEED, exec),
        bounded.report,
        hyper.report,
        verify_frobenius_trace_identity(1000, 8, SUITE_SEED, exec),
    ]
}
