//! Planted instances of robust subspace recovery with a majority of outliers.
//!
//! A sample holds `round(alpha * n)` inliers drawn from a zero-mean
//! distribution supported on the range of a planted rank-`r` projector, and
//! the remaining points chosen by an outlier strategy. Point order is
//! shuffled; the inlier mask records which is which.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::stream_rng;
use crate::linalg::{Projector, SymMatrix, PROJECTOR_TOL};

/// Inlier distribution on the planted subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistTag {
    /// `N(0, Π*)`.
    Gaussian,
    /// Uniform `±1` coordinates in an orthonormal `r`-frame of the range.
    Hypercube,
    /// Uniform on the radius-`sqrt(r)` sphere of the range.
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierStrategy {
    /// i.i.d. `N(0, I_d)`.
    DenseNoise,
    /// i.i.d. `N(0, Π')` for an independent rank-`r` projector `Π'`.
    PlantedSecondSubspace,
    /// Up to `alpha * n` points from `N(0, Π')`, the rest dense noise.
    CloneCluster,
}

macro_rules! tag_str {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $name),* }
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)*
                    other => Err(Error::InvalidArgument(format!("unknown tag `{other}`"))),
                }
            }
        }
    };
}

tag_str!(DistTag { Gaussian => "gaussian", Hypercube => "hypercube", Sphere => "sphere" });
tag_str!(OutlierStrategy {
    DenseNoise => "dense_noise",
    PlantedSecondSubspace => "planted_second_subspace",
    CloneCluster => "clone_cluster",
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub alpha: f64,
    pub dist_tag: DistTag,
    pub strategy: OutlierStrategy,
    pub seed: u64,
}

impl InstanceConfig {
    /// The desk-scale instance used throughout the tests: `d = 4, r = 2,
    /// n = 24, alpha = 0.5`, Gaussian inliers against a second planted
    /// subspace.
    pub fn standard(seed: u64) -> Self {
        Self {
            d: 4,
            r: 2,
            n: 24,
            alpha: 0.5,
            dist_tag: DistTag::Gaussian,
            strategy: OutlierStrategy::PlantedSecondSubspace,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r >= self.d {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= r < d, got r = {}, d = {}",
                self.r, self.d
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} outside (0, 1]",
                self.alpha
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(())
    }

    pub fn inlier_count(&self) -> usize {
        (self.alpha * self.n as f64).round() as usize
    }
}

/// Points with ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub points: Vec<DVector<f64>>,
    pub inlier_mask: Vec<bool>,
    /// Realized inlier fraction.
    pub alpha: f64,
    pub planted: Projector,
    pub dist_tag: DistTag,
    pub strategy: OutlierStrategy,
    pub seed: u64,
}

impl LabeledSample {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.planted.dim()
    }

    pub fn r(&self) -> usize {
        self.planted.rank()
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|b| **b).count()
    }

    pub fn inliers(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.points
            .iter()
            .zip(&self.inlier_mask)
            .filter(|(_, m)| **m)
            .map(|(x, _)| x)
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.inlier_mask[i]).collect()
    }

    /// `max_{i ∈ I} ‖(I − Π*) x_i‖₂`.
    pub fn max_inlier_residual(&self) -> f64 {
        self.inliers()
            .map(|x| self.planted.residual(x))
            .fold(0.0, f64::max)
    }

    /// Copy with the inlier set replaced (used to build degenerate cases).
    pub fn with_points(&self, points: Vec<DVector<f64>>, inlier_mask: Vec<bool>) -> Result<Self> {
        if points.len() != inlier_mask.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: inlier_mask.len(),
            });
        }
        let mut out = self.clone();
        out.alpha = inlier_mask.iter().filter(|b| **b).count() as f64 / points.len() as f64;
        out.points = points;
        out.inlier_mask = inlier_mask;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        write_instance_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: InstanceFile = serde_json::from_str(text)?;
        raw.try_into()
    }
}

fn draw_inlier<R: Rng + ?Sized>(tag: DistTag, frame: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let r = frame.ncols();
    let coords = match tag {
        DistTag::Gaussian => DVector::from_fn(r, |_, _| rng.sample(StandardNormal)),
        DistTag::Hypercube => {
            DVector::from_fn(r, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
        DistTag::Sphere => {
            let g = DVector::<f64>::from_fn(r, |_, _| rng.sample(StandardNormal));
            g.normalize() * (r as f64).sqrt()
        }
    };
    frame * coords
}

fn draw_subspace_gaussian<R: Rng + ?Sized>(frame: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    draw_inlier(DistTag::Gaussian, frame, rng)
}

/// Draws a planted instance.
pub fn generate(cfg: &InstanceConfig) -> Result<LabeledSample> {
    cfg.validate()?;
    let k = cfg.inlier_count();
    if k == 0 {
        return Err(Error::Infeasible(format!(
            "alpha * n = {} rounds to zero inliers",
            cfg.alpha * cfg.n as f64
        )));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let planted = Projector::random(cfg.d, cfg.r, &mut rng)?;
    let frame = planted.frame();
    // Snap the stored projector to the exact frame so inliers sit in its range
    // to rounding error.
    let planted = Projector::from_frame(&frame)?;
    let second = Projector::random(cfg.d, cfg.r, &mut rng)?.frame();

    let mut labeled: Vec<(DVector<f64>, bool)> = Vec::with_capacity(cfg.n);
    for _ in 0..k {
        labeled.push((draw_inlier(cfg.dist_tag, &frame, &mut rng), true));
    }
    let outliers = cfg.n - k;
    let dense = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::<f64>::from_fn(cfg.d, |_, _| rng.sample(StandardNormal))
    };
    match cfg.strategy {
        OutlierStrategy::DenseNoise => {
            for _ in 0..outliers {
                labeled.push((dense(&mut rng), false));
            }
        }
        OutlierStrategy::PlantedSecondSubspace => {
            for _ in 0..outliers {
                labeled.push((draw_subspace_gaussian(&second, &mut rng), false));
            }
        }
        OutlierStrategy::CloneCluster => {
            let clones = k.min(outliers);
            for _ in 0..clones {
                labeled.push((draw_subspace_gaussian(&second, &mut rng), false));
            }
            for _ in clones..outliers {
                labeled.push((dense(&mut rng), false));
            }
        }
    }
    labeled.shuffle(&mut rng);
    let (points, inlier_mask) = labeled.into_iter().unzip();
    Ok(LabeledSample {
        points,
        inlier_mask,
        alpha: k as f64 / cfg.n as f64,
        planted,
        dist_tag: cfg.dist_tag,
        strategy: cfg.strategy,
        seed: cfg.seed,
    })
}

/// Second planted subspace of a `planted_second_subspace` or `clone_cluster`
/// instance, regenerated from the seed.
pub fn second_subspace(cfg: &InstanceConfig) -> Result<Projector> {
    let mut rng = stream_rng(cfg.seed, 0);
    let _ = Projector::random(cfg.d, cfg.r, &mut rng)?;
    Projector::from_frame(&Projector::random(cfg.d, cfg.r, &mut rng)?.frame())
}

/// Pairs points at random and returns `(x_a − x_b) / sqrt(2)` per pair,
/// removing any common mean. A pair is an inlier iff both members are.
pub fn mean_zero_pairing(s: &LabeledSample, seed: u64) -> Result<LabeledSample> {
    let n = s.n();
    if n % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "pairing needs an even number of points, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 1));
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut points = Vec::with_capacity(n / 2);
    let mut mask = Vec::with_capacity(n / 2);
    for pair in order.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        points.push((&s.points[a] - &s.points[b]) * scale);
        mask.push(s.inlier_mask[a] && s.inlier_mask[b]);
    }
    let inliers = mask.iter().filter(|m| **m).count();
    Ok(LabeledSample {
        alpha: inliers as f64 / (n / 2) as f64,
        points,
        inlier_mask: mask,
        planted: s.planted.clone(),
        dist_tag: s.dist_tag,
        strategy: s.strategy,
        seed: s.seed,
    })
}

/// On-disk instance layout (field order is the canonical order).
#[derive(Deserialize)]
struct InstanceFile {
    d: usize,
    r: usize,
    n: usize,
    alpha: f64,
    dist_tag: DistTag,
    strategy: OutlierStrategy,
    seed: u64,
    points: Vec<Vec<f64>>,
    inlier_mask: Vec<bool>,
    planted: Vec<Vec<f64>>,
}

impl TryFrom<InstanceFile> for LabeledSample {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.points.len() != f.n || f.inlier_mask.len() != f.n {
            return Err(Error::DimensionMismatch {
                expected: f.n,
                found: f.points.len(),
            });
        }
        if let Some(bad) = f.points.iter().find(|p| p.len() != f.d) {
            return Err(Error::DimensionMismatch {
                expected: f.d,
                found: bad.len(),
            });
        }
        if f.planted.len() != f.d || f.planted.iter().any(|row| row.len() != f.d) {
            return Err(Error::InvalidArgument("planted must be d × d".into()));
        }
        let m = DMatrix::from_fn(f.d, f.d, |i, j| f.planted[i][j]);
        let planted = Projector::new(SymMatrix::from_dmatrix(&m)?, f.r, PROJECTOR_TOL)?;
        Ok(LabeledSample {
            points: f.points.into_iter().map(DVector::from_vec).collect(),
            inlier_mask: f.inlier_mask,
            alpha: f.alpha,
            planted,
            dist_tag: f.dist_tag,
            strategy: f.strategy,
            seed: f.seed,
        })
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    format!("{x:.16e}")
}

fn write_row(out: &mut String, row: impl Iterator<Item = f64>) {
    out.push('[');
    for (k, v) in row.enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_f64(v));
    }
    out.push(']');
}

fn write_instance_json(s: &LabeledSample) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"d\": {},", s.d());
    let _ = writeln!(out, "  \"r\": {},", s.r());
    let _ = writeln!(out, "  \"n\": {},", s.n());
    let _ = writeln!(out, "  \"alpha\": {},", fmt_f64(s.alpha));
    let _ = writeln!(out, "  \"dist_tag\": \"{}\",", s.dist_tag.as_str());
    let _ = writeln!(out, "  \"strategy\": \"{}\",", s.strategy.as_str());
    let _ = writeln!(out, "  \"seed\": {},", s.seed);
    out.push_str("  \"points\": [");
    for (k, p) in s.points.iter().enumerate() {
        out.push_str(if k == 0 { "\n    " } else { ",\n    " });
        write_row(&mut out, p.iter().copied());
    }
    out.push_str("\n  ],\n");
    let mask: Vec<&str> = s
        .inlier_mask
        .iter()
        .map(|b| if *b { "true" } else { "false" })
        .collect();
    let _ = writeln!(out, "  \"inlier_mask\": [{}],", mask.join(", "));
    out.push_str("  \"planted\": [");
    let m = s.planted.matrix();
    for i in 0..s.d() {
        out.push_str(if i == 0 { "\n    " } else { ",\n    " });
        write_row(&mut out, (0..s.d()).map(|j| m.get(i, j)));
    }
    out.push_str("\n  ]\n}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_is_all_inliers() {
        let cfg = InstanceConfig {
            alpha: 1.0,
            ..InstanceConfig::standard(3)
        };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.inlier_count(), s.n());
        for x in &s.points {
            assert!(s.planted.residual(x) <= 1e-9);
        }
    }

    #[test]
    fn second_subspace_split() {
        let cfg = InstanceConfig {
            d: 4,
            r: 2,
            n: 20,
            alpha: 0.5,
            dist_tag: DistTag::Gaussian,
            strategy: OutlierStrategy::PlantedSecondSubspace,
            seed: 7,
        };
        let s = generate(&cfg).unwrap();
        let second = second_subspace(&cfg).unwrap();
        let mut on_first = 0;
        let mut on_second = 0;
        for (x, m) in s.points.iter().zip(&s.inlier_mask) {
            let r1 = s.planted.residual(x);
            let r2 = second.residual(x);
            if r1 <= 1e-9 {
                on_first += 1;
                assert!(*m);
            }
            if r2 <= 1e-9 {
                on_second += 1;
                assert!(!*m);
            }
        }
        assert_eq!((on_first, on_second), (10, 10));
    }

    #[test]
    fn clone_cluster_counts() {
        let cfg = InstanceConfig {
            n: 30,
            alpha: 0.3,
            strategy: OutlierStrategy::CloneCluster,
            ..InstanceConfig::standard(2)
        };
        let s = generate(&cfg).unwrap();
        let second = second_subspace(&cfg).unwrap();
        let clones = s.points.iter().filter(|x| second.residual(x) <= 1e-9).count();
        assert_eq!(s.inlier_count(), 9);
        assert_eq!(clones, 9);
    }

    #[test]
    fn invalid_configs() {
        let base = InstanceConfig::standard(1);
        assert!(generate(&InstanceConfig { r: 4, ..base.clone() }).is_err());
        assert!(generate(&InstanceConfig { alpha: 0.0, ..base.clone() }).is_err());
        assert!(matches!(
            generate(&InstanceConfig { n: 3, alpha: 0.1, ..base }),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&InstanceConfig::standard(9)).unwrap();
        let b = generate(&InstanceConfig::standard(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn hypercube_and_sphere_live_on_range() {
        for tag in [DistTag::Hypercube, DistTag::Sphere] {
            let cfg = InstanceConfig {
                dist_tag: tag,
                ..InstanceConfig::standard(4)
            };
            let s = generate(&cfg).unwrap();
            assert!(s.max_inlier_residual() <= 1e-9);
            for x in s.inliers() {
                assert!((x.norm_squared() - 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = generate(&InstanceConfig::standard(5)).unwrap();
        let text = s.to_json();
        let back = LabeledSample::from_json(&text).unwrap();
        assert_eq!(back.points, s.points);
        assert_eq!(back.inlier_mask, s.inlier_mask);
        assert_eq!(back.to_json(), text);
        let keys = ["\"d\"", "\"r\"", "\"n\"", "\"alpha\"", "\"dist_tag\"", "\"strategy\"",
            "\"seed\"", "\"points\"", "\"inlier_mask\"", "\"planted\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pairing_odd_n_errors() {
        let s = generate(&InstanceConfig { n: 5, ..InstanceConfig::standard(1) }).unwrap();
        assert!(mean_zero_pairing(&s, 0).is_err());
    }

    #[test]
    fn pairing_all_inliers_stays_on_range() {
        let s = generate(&InstanceConfig { alpha: 1.0, ..InstanceConfig::standard(6) }).unwrap();
        let p = mean_zero_pairing(&s, 3).unwrap();
        assert_eq!(p.n(), 12);
        assert_eq!(p.inlier_count(), 12);
        assert_eq!(p.alpha, 1.0);
        assert!(p.max_inlier_residual() <= 1e-9);
    }
}
