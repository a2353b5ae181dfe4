//! Even "core indicator" polynomials and empirical anti-concentration
//! certificates.
//!
//! The indicator `q` is fitted by weighted least squares on the even monomial
//! basis `{1, x², …, x^degree}`: target 1 on `[−δ, δ]` (flat weight) and 0 on
//! `[2δ, 10]` under the standard Gaussian density. The band `(δ, 2δ)` is free.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::gauss::WeightedGaussian;
use crate::poly::UniPoly;
use crate::sample::LabeledSample;

/// Right end of the fitting window, in standard deviations.
const FIT_WINDOW: f64 = 10.0;
const INNER_NODES: usize = 400;
const OUTER_NODES: usize = 4000;
/// Grid used to check `|q − 1| ≤ δ` on `[−δ, δ]`.
pub const CHECK_GRID: usize = 10_000;
/// Draws used for the Gaussian second moment of `q`.
pub const MOMENT_DRAWS: usize = 1_000_000;
const MOMENT_SEED: u64 = 0x5eed_a11c;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPolynomial {
    pub q: UniPoly,
    pub delta: f64,
    pub degree: usize,
    /// `E_{N(0,1)} q² / δ`.
    pub c_estimate: f64,
}

impl IndicatorPolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.q.eval(x)
    }
}

/// Least-squares fit without the invariant check. Returns the polynomial and
/// its sup deviation `max |q − 1|` over the `[−δ, δ]` grid.
pub fn fit_core_indicator(delta: f64, degree: usize) -> Result<(UniPoly, f64)> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} outside (0, 1/2]"
        )));
    }
    if degree < 4 || degree % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "degree must be even and >= 4, got {degree}"
        )));
    }
    let powers: Vec<i32> = (0..=degree as i32).step_by(2).collect();
    let rows = INNER_NODES + OUTER_NODES;
    let mut a = DMatrix::<f64>::zeros(rows, powers.len());
    let mut b = DVector::<f64>::zeros(rows);
    let h_in = delta / INNER_NODES as f64;
    let h_out = (FIT_WINDOW - 2.0 * delta) / OUTER_NODES as f64;
    for k in 0..rows {
        let (x, w, target) = if k < INNER_NODES {
            ((k as f64 + 0.5) * h_in, h_in, 1.0)
        } else {
            let x = 2.0 * delta + ((k - INNER_NODES) as f64 + 0.5) * h_out;
            let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            (x, density * h_out, 0.0)
        };
        let sw = w.sqrt();
        // scaled variable x / T keeps the basis columns comparable
        let u = x / FIT_WINDOW;
        for (c, &p) in powers.iter().enumerate() {
            a[(k, c)] = sw * u.powi(p);
        }
        b[k] = sw * target;
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let mut coeffs = vec![0.0; degree + 1];
    for (c, &p) in powers.iter().enumerate() {
        coeffs[p as usize] = sol[c] / FIT_WINDOW.powi(p);
    }
    let q = UniPoly::new(coeffs);
    let sup_dev = (0..=CHECK_GRID)
        .map(|k| -delta + 2.0 * delta * k as f64 / CHECK_GRID as f64)
        .map(|x| (q.eval(x) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((q, sup_dev))
}

/// Builds the even core indicator for `delta` at `degree`, or reports the
/// achieved deviation when the fit cannot meet `|q − 1| ≤ δ`.
pub fn build_core_indicator(delta: f64, degree: usize) -> Result<IndicatorPolynomial> {
    let (q, sup_dev) = fit_core_indicator(delta, degree)?;
    if sup_dev > delta {
        return Err(Error::IndicatorFit {
            achieved: sup_dev,
            delta,
        });
    }
    let g = WeightedGaussian::draw(1, MOMENT_DRAWS, MOMENT_SEED);
    let second = g.expect(|x| q.eval(x[0]).powi(2)).mean;
    Ok(IndicatorPolynomial {
        q,
        delta,
        degree,
        c_estimate: second / delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiftReport {
    pub even: bool,
    pub max_rel_residual: f64,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.even && self.max_rel_residual <= 1e-9
    }
}

/// Checks that `q` is even and that the homogenized square
/// `‖v‖^{2t} q²(⟨x,v⟩/‖v‖)` equals `(Σ_i c_{2i} ‖v‖^{t−2i} ⟨x,v⟩^{2i})²` on
/// random pairs `(x, v)` in `R^dim`. `t` must be even and at least `deg q`.
pub fn check_evenness_and_lift(
    q: &UniPoly,
    t: usize,
    pairs: usize,
    dim: usize,
    seed: u64,
) -> LiftReport {
    let even = q.is_even(1e-14);
    if !even || t % 2 == 1 || t < q.degree() {
        return LiftReport {
            even: false,
            max_rel_residual: f64::INFINITY,
        };
    }
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let v = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let norm = v.norm();
        let ip = x.dot(&v);
        let lhs = norm.powi(2 * t as i32) * q.eval(ip / norm).powi(2);
        let sq = norm * norm;
        let homog: f64 = (0..=q.degree())
            .step_by(2)
            .map(|k| q.coefficient(k) * sq.powi(((t - k) / 2) as i32) * ip.powi(k as i32))
            .sum();
        let rhs = homog * homog;
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    LiftReport {
        even,
        max_rel_residual: worst,
    }
}

/// Empirical check of the two anti-concentration conditions on the inliers,
/// over unit directions drawn uniformly from the planted range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub delta: f64,
    pub degree: usize,
    #[serde(rename = "C_estimate")]
    pub c_estimate: f64,
    /// `min_{x, v} ⟨x,v⟩² + δ² q²(⟨x,v⟩) − δ²/4`.
    pub cond1_margin: f64,
    /// `max_v mean_x q²(⟨x,v⟩)`.
    pub cond2_value: f64,
    pub certified: bool,
}

impl CertReport {
    /// `2 C δ`: the sampled second moment may exceed the population bound by
    /// a factor of two.
    pub fn cond2_threshold(&self) -> f64 {
        2.0 * self.c_estimate * self.delta
    }
}

pub fn certify_sample(
    s: &LabeledSample,
    ip: &IndicatorPolynomial,
    directions: usize,
    seed: u64,
    exec: Execution,
) -> Result<CertReport> {
    let inliers: Vec<&DVector<f64>> = s.inliers().collect();
    if inliers.is_empty() {
        return Err(Error::InvalidArgument("sample has no inliers".into()));
    }
    if directions == 0 {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    let frame = s.planted.frame();
    let delta2 = ip.delta * ip.delta;
    let per_direction = exec.map_range(directions, |j| {
        let mut rng = stream_rng(seed, j as u64);
        let g = DVector::<f64>::from_fn(frame.ncols(), |_, _| rng.sample(StandardNormal));
        let v = &frame * g.normalize();
        let mut margin = f64::INFINITY;
        let mut second = 0.0;
        for x in &inliers {
            let z = x.dot(&v);
            let qz = ip.eval(z);
            margin = margin.min(z * z + delta2 * qz * qz - delta2 / 4.0);
            second += qz * qz;
        }
        (margin, second / inliers.len() as f64)
    });
    let cond1_margin = per_direction.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let cond2_value = per_direction.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut report = CertReport {
        delta: ip.delta,
        degree: ip.degree,
        c_estimate: ip.c_estimate,
        cond1_margin,
        cond2_value,
        certified: false,
    };
    report.certified = cond1_margin >= 0.0 && cond2_value <= report.cond2_threshold();
    Ok(report)
}
