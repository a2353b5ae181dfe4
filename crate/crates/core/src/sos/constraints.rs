//! The polynomial system over the subsample indicator `w` and the projector
//! indeterminate `Π`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::anticonc::IndicatorPolynomial;
use crate::error::{Error, Result};
use crate::exec::stream_rng;
use crate::linalg::SymMatrix;
use crate::poly::{variables, MultiPoly, Variables};
use crate::sample::LabeledSample;

/// Variable order: `w_1..w_n`, then the upper triangle of `Π` row by row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub n: usize,
    pub d: usize,
}

impl VarLayout {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d }
    }

    pub fn pi_count(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    pub fn nvars(&self) -> usize {
        self.n + self.pi_count()
    }

    pub fn w(&self, i: usize) -> usize {
        debug_assert!(i < self.n);
        i
    }

    /// Variable index of `Π_jk` (either order).
    pub fn pi(&self, j: usize, k: usize) -> usize {
        let (a, b) = if j <= k { (j, k) } else { (k, j) };
        debug_assert!(b < self.d);
        self.n + a * (2 * self.d - a + 1) / 2 + (b - a)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n).map(|i| format!("w{i}")).collect();
        for j in 0..self.d {
            for k in j..self.d {
                names.push(format!("P{}_{}", j + 1, k + 1));
            }
        }
        names
    }

    pub fn variables(&self) -> Variables {
        variables(&self.names())
    }

    /// Recovers the layout from a variable-name list produced by [`Self::names`].
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let n = names
            .iter()
            .take_while(|s| s.as_ref().starts_with('w'))
            .count();
        let rest = names.len() - n;
        let d = (0..=rest).find(|d| d * (d + 1) / 2 == rest).ok_or_else(|| {
            Error::InvalidArgument(format!("{rest} projector variables is not a triangle number"))
        })?;
        let layout = Self { n, d };
        if layout.names().iter().zip(names).any(|(a, b)| a != b.as_ref()) {
            return Err(Error::InvalidArgument("unexpected variable names".into()));
        }
        Ok(layout)
    }

    /// Point in variable space for the assignment `(w, Π)`.
    pub fn assignment(&self, w: &[f64], pi: &SymMatrix) -> Vec<f64> {
        let mut point = vec![0.0; self.nvars()];
        point[..self.n].copy_from_slice(w);
        for j in 0..self.d {
            for k in j..self.d {
                point[self.pi(j, k)] = pi.get(j, k);
            }
        }
        point
    }
}

/// Flags selecting the optional constraint families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintOptions {
    /// Relaxation degree the rows must fit into.
    pub degree: usize,
    pub trace_constraint: bool,
    pub hyper_t: usize,
    pub hyper_q_count: usize,
    pub bounded_var_q_count: usize,
    /// Constant `C` of the hypercontractivity and bounded-variance rows.
    pub c: f64,
    pub anti_conc: Option<IndicatorPolynomial>,
    pub anti_conc_directions: usize,
    /// Seed for the sampled `Q` matrices and directions.
    pub seed: u64,
}

impl Default for ConstraintOptions {
    fn default() -> Self {
        Self {
            degree: 6,
            trace_constraint: false,
            hyper_t: 2,
            hyper_q_count: 8,
            bounded_var_q_count: 8,
            c: 10.0,
            anti_conc: None,
            anti_conc_directions: 8,
            seed: 0,
        }
    }
}

impl ConstraintOptions {
    /// Only the mandatory rows.
    pub fn bare(degree: usize) -> Self {
        Self {
            degree,
            hyper_q_count: 0,
            bounded_var_q_count: 0,
            ..Self::default()
        }
    }

    /// Degree-4 configuration used by the desk-scale pipeline. The
    /// hypercontractivity rows have degree `2t + 1` and do not fit at degree 4,
    /// so they are off; the rank is pinned by the trace row.
    pub fn desk() -> Self {
        Self {
            degree: 4,
            trace_constraint: true,
            hyper_q_count: 0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub poly: MultiPoly,
}

impl Row {
    fn new(name: impl Into<String>, poly: MultiPoly) -> Self {
        Self {
            name: name.into(),
            poly,
        }
    }
}

/// Equalities `g = 0` and inequalities `h ≥ 0`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub layout: VarLayout,
    pub vars: Variables,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub options: ConstraintOptions,
    /// Right-hand side of `Σ w_i = K`.
    pub target_weight: usize,
    pub rank: usize,
}

/// Relaxation degree needed by an equality of degree `deg`.
pub fn equality_degree(deg: usize) -> usize {
    even_ceil(deg + 2)
}

/// Relaxation degree needed by an inequality of degree `deg`.
pub fn inequality_degree(deg: usize) -> usize {
    even_ceil(deg.max(1))
}

fn even_ceil(k: usize) -> usize {
    k + k % 2
}

/// Random symmetric `d × d` matrix with unit Frobenius norm.
pub fn random_unit_symmetric<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let q = (&g + g.transpose()) * 0.5;
    let norm = q.norm();
    q / norm
}

/// Stream offsets that keep the sampled families independent.
const HYPER_STREAM: u64 = 1 << 20;
const BOUNDED_STREAM: u64 = 2 << 20;
const DIRECTION_STREAM: u64 = 3 << 20;

pub fn build_constraints(s: &LabeledSample, opts: &ConstraintOptions) -> Result<ConstraintSystem> {
    let (n, d) = (s.n(), s.d());
    let layout = VarLayout::new(n, d);
    let vars = layout.variables();
    let w = |i: usize| MultiPoly::var_at(&vars, layout.w(i));
    let pi: Vec<Vec<MultiPoly>> = (0..d)
        .map(|j| (0..d).map(|k| MultiPoly::var_at(&vars, layout.pi(j, k))).collect())
        .collect();
    let target_weight = s.inlier_count();
    let k_norm = 1.0 / target_weight.max(1) as f64;

    let mut equalities = Vec::new();
    let mut sum = MultiPoly::constant(&vars, -(target_weight as f64));
    for i in 0..n {
        sum = &sum + &w(i);
    }
    equalities.push(Row::new("sum_w", sum));
    for i in 0..n {
        let wi = w(i);
        equalities.push(Row::new(format!("booleanity/{}", i + 1), &(&wi * &wi) - &wi));
    }
    for (i, x) in s.points.iter().enumerate() {
        for j in 0..d {
            let mut g = MultiPoly::zero(&vars);
            for k in 0..d {
                g = &g + &pi[j][k].scale(x[k]);
            }
            g = &g - &MultiPoly::constant(&vars, x[j]);
            equalities.push(Row::new(format!("membership/{}/{}", i + 1, j + 1), &w(i) * &g));
        }
    }
    for j in 0..d {
        for k in j..d {
            let mut g = pi[j][k].scale(-1.0);
            for l in 0..d {
                g = &g + &(&pi[j][l] * &pi[l][k]);
            }
            equalities.push(Row::new(format!("idempotence/{}/{}", j + 1, k + 1), g));
        }
    }
    if opts.trace_constraint {
        let mut g = MultiPoly::constant(&vars, -(s.r() as f64));
        for j in 0..d {
            g = &g + &pi[j][j];
        }
        equalities.push(Row::new("trace", g));
    }

    let mut inequalities = Vec::new();
    let quad_rows = |q: &DMatrix<f64>, power: u32| -> (MultiPoly, Vec<f64>, MultiPoly) {
        // Σ_i w_i (a_i − tr(QΠ))^power / K, with a_i = x_iᵀ Q x_i
        let mut tr = MultiPoly::zero(&vars);
        for j in 0..d {
            for k in 0..d {
                tr = &tr + &pi[j][k].scale(q[(j, k)]);
            }
        }
        let a: Vec<f64> = s.points.iter().map(|x| (x.transpose() * q * x)[(0, 0)]).collect();
        let mut centered = MultiPoly::zero(&vars);
        for (i, &ai) in a.iter().enumerate() {
            let diff = &MultiPoly::constant(&vars, ai) - &tr;
            centered = &centered + &(&w(i) * &diff.pow(power)).scale(k_norm);
        }
        (centered, a, tr)
    };
    let t = opts.hyper_t.max(1);
    for qi in 0..opts.hyper_q_count {
        let mut rng = stream_rng(opts.seed, HYPER_STREAM + qi as u64);
        let q = random_unit_symmetric(d, &mut rng);
        let (centered, a, _) = quad_rows(&q, 2 * t as u32);
        let mut second = MultiPoly::zero(&vars);
        for (i, &ai) in a.iter().enumerate() {
            second = &second + &w(i).scale(k_norm * ai * ai);
        }
        let bound = second.pow(t as u32).scale((opts.c * t as f64).powi(t as i32));
        inequalities.push(Row::new(format!("hypercontractivity/{}", qi + 1), &bound - &centered));
    }
    for qi in 0..opts.bounded_var_q_count {
        let mut rng = stream_rng(opts.seed, BOUNDED_STREAM + qi as u64);
        let q = random_unit_symmetric(d, &mut rng);
        let (centered, _, _) = quad_rows(&q, 2);
        let mut frob = MultiPoly::zero(&vars);
        for j in 0..d {
            for k in 0..d {
                let mut e = MultiPoly::zero(&vars);
                for l in 0..d {
                    for m in 0..d {
                        if q[(l, m)] != 0.0 {
                            e = &e + &(&pi[j][l] * &pi[m][k]).scale(q[(l, m)]);
                        }
                    }
                }
                frob = &frob + &(&e * &e);
            }
        }
        inequalities.push(Row::new(
            format!("bounded_variance/{}", qi + 1),
            &frob.scale(opts.c) - &centered,
        ));
    }
    if let Some(ip) = &opts.anti_conc {
        let bound = 2.0 * ip.c_estimate * ip.delta;
        for j in 0..opts.anti_conc_directions {
            let mut rng = stream_rng(opts.seed, DIRECTION_STREAM + j as u64);
            let v = nalgebra::DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal))
                .normalize();
            let mut h = MultiPoly::constant(&vars, bound);
            for (i, x) in s.points.iter().enumerate() {
                let qv = ip.eval(x.dot(&v));
                h = &h - &w(i).scale(k_norm * qv * qv);
            }
            inequalities.push(Row::new(format!("anti_concentration/{}", j + 1), h));
        }
    }

    let cs = ConstraintSystem {
        layout,
        vars,
        equalities,
        inequalities,
        options: opts.clone(),
        target_weight,
        rank: s.r(),
    };
    cs.check_degree(opts.degree)?;
    Ok(cs)
}

impl ConstraintSystem {
    /// Fails with the first row that does not fit at relaxation degree `degree`.
    pub fn check_degree(&self, degree: usize) -> Result<()> {
        let eq = self
            .equalities
            .iter()
            .map(|r| (r, equality_degree(r.poly.degree())));
        let ineq = self
            .inequalities
            .iter()
            .map(|r| (r, inequality_degree(r.poly.degree())));
        for (row, required) in eq.chain(ineq) {
            if degree < required {
                return Err(Error::DegreeTooLow {
                    row: row.name.clone(),
                    degree,
                    required,
                });
            }
        }
        Ok(())
    }

    /// Smallest relaxation degree that fits every row.
    pub fn required_degree(&self) -> usize {
        let eq = self.equalities.iter().map(|r| equality_degree(r.poly.degree()));
        let ineq = self
            .inequalities
            .iter()
            .map(|r| inequality_degree(r.poly.degree()));
        eq.chain(ineq).max().unwrap_or(2).max(2)
    }

    /// Largest `|g(point)|` over equalities and smallest `h(point)` over
    /// inequalities (`+∞` when there are none).
    pub fn evaluate(&self, point: &[f64]) -> Result<(f64, f64)> {
        let mut eq = 0.0_f64;
        for r in &self.equalities {
            eq = eq.max(r.poly.evaluate(point)?.abs());
        }
        let mut ineq = f64::INFINITY;
        for r in &self.inequalities {
            ineq = ineq.min(r.poly.evaluate(point)?);
        }
        Ok((eq, ineq))
    }

    /// The planted witness: `w` indicates the inliers and `Π = Π*`.
    pub fn ground_truth_point(&self, s: &LabeledSample) -> Vec<f64> {
        let w: Vec<f64> = s.inlier_mask.iter().map(|&b| f64::from(u8::from(b))).collect();
        self.layout.assignment(&w, s.planted.matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{generate, DistTag, InstanceConfig, OutlierStrategy};

    fn small(seed: u64) -> LabeledSample {
        generate(&InstanceConfig {
            d: 2,
            r: 1,
            n: 4,
            alpha: 0.5,
            dist_tag: DistTag::Gaussian,
            strategy: OutlierStrategy::DenseNoise,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn layout_names_round_trip() {
        let l = VarLayout::new(3, 3);
        assert_eq!(l.nvars(), 9);
        assert_eq!(l.pi(0, 0), 3);
        assert_eq!(l.pi(2, 1), l.pi(1, 2));
        assert_eq!(l.names()[l.pi(1, 2)], "P2_3");
        assert_eq!(l.names()[l.pi(2, 2)], "P3_3");
        assert_eq!(VarLayout::from_names(&l.names()).unwrap(), l);
    }

    #[test]
    fn bare_row_count() {
        let cs = build_constraints(&small(1), &ConstraintOptions::bare(4)).unwrap();
        assert_eq!(cs.equalities.len(), 1 + 4 + 4 * 2 + 3);
        assert!(cs.inequalities.is_empty());
    }

    #[test]
    fn trace_adds_one_row() {
        let s = small(2);
        let opts = ConstraintOptions {
            trace_constraint: true,
            ..ConstraintOptions::bare(4)
        };
        let cs = build_constraints(&s, &opts).unwrap();
        assert_eq!(cs.equalities.len(), 17);
        let trace = cs.equalities.last().unwrap();
        assert_eq!(trace.name, "trace");
        let expected = &(&MultiPoly::var(&cs.vars, "P1_1").unwrap()
            + &MultiPoly::var(&cs.vars, "P2_2").unwrap())
            - &MultiPoly::constant(&cs.vars, 1.0);
        assert_eq!(trace.poly, expected);
    }

    #[test]
    fn ground_truth_is_feasible() {
        for seed in 0..5 {
            let s = generate(&InstanceConfig::standard(seed)).unwrap();
            let opts = ConstraintOptions {
                trace_constraint: true,
                ..ConstraintOptions::default()
            };
            let cs = build_constraints(&s, &opts).unwrap();
            let (eq, ineq) = cs.evaluate(&cs.ground_truth_point(&s)).unwrap();
            assert!(eq <= 1e-9, "seed {seed}: equality residual {eq}");
            assert!(ineq >= 0.0, "seed {seed}: inequality value {ineq}");
        }
    }

    #[test]
    fn hyper_rows_need_degree_six() {
        let s = small(3);
        let err = build_constraints(
            &s,
            &ConstraintOptions {
                degree: 4,
                ..ConstraintOptions::default()
            },
        )
        .unwrap_err();
        match err {
            Error::DegreeTooLow { row, required, .. } => {
                assert_eq!(row, "hypercontractivity/1");
                assert_eq!(required, 6);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(build_constraints(&s, &ConstraintOptions::desk()).is_ok());
        assert!(matches!(
            build_constraints(&s, &ConstraintOptions::bare(2)),
            Err(Error::DegreeTooLow { .. })
        ));
    }
}
