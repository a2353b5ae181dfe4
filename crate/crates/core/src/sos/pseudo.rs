//! Pseudo-distributions: truncated moment sequences over `(w, Π)`.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::constraints::{ConstraintSystem, VarLayout};
use super::monomials::MonomialIndex;
use crate::error::{Error, Result};
use crate::exec::stream_rng;
use crate::linalg::SymMatrix;
use crate::poly::{Monomial, MultiPoly, Variables};
use crate::sample::fmt_f64;

/// Level-`degree` pseudo-distribution. `moments[k]` is the pseudo-expectation
/// of `index.monomial(k)`; the index may reach past `degree`, only its
/// degree-`<= degree` prefix is populated.
#[derive(Clone, Debug)]
pub struct PseudoDistribution {
    degree: usize,
    layout: VarLayout,
    vars: Variables,
    index: Arc<MonomialIndex>,
    moments: Vec<f64>,
}

impl PseudoDistribution {
    pub fn new(layout: VarLayout, index: Arc<MonomialIndex>, degree: usize, moments: Vec<f64>) -> Result<Self> {
        if degree % 2 == 1 || degree > index.degree() {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} is odd or exceeds the index degree {}",
                index.degree()
            )));
        }
        if index.nvars() != layout.nvars() {
            return Err(Error::DimensionMismatch {
                expected: layout.nvars(),
                found: index.nvars(),
            });
        }
        let len = index.len_up_to(degree);
        if moments.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: moments.len(),
            });
        }
        Ok(Self {
            degree,
            layout,
            vars: layout.variables(),
            index,
            moments,
        })
    }

    /// Point mass at `point`.
    pub fn dirac(layout: VarLayout, index: Arc<MonomialIndex>, degree: usize, point: &[f64]) -> Result<Self> {
        Self::mixture(layout, index, degree, &[(1.0, point.to_vec())])
    }

    /// Finite mixture `Σ p_k δ_{x_k}`; weights are normalized.
    pub fn mixture(
        layout: VarLayout,
        index: Arc<MonomialIndex>,
        degree: usize,
        atoms: &[(f64, Vec<f64>)],
    ) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        if atoms.is_empty() || total <= 0.0 || atoms.iter().any(|a| a.0 < 0.0) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative with positive sum".into()));
        }
        for (_, x) in atoms {
            if x.len() != layout.nvars() {
                return Err(Error::DimensionMismatch {
                    expected: layout.nvars(),
                    found: x.len(),
                });
            }
        }
        let len = index.len_up_to(degree.min(index.degree()));
        let moments = (0..len)
            .map(|k| {
                let m = index.monomial(k);
                atoms.iter().map(|(p, x)| p * m.eval(x)).sum::<f64>() / total
            })
            .collect();
        Self::new(layout, index, degree, moments)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn layout(&self) -> VarLayout {
        self.layout
    }

    pub fn variables(&self) -> &Variables {
        &self.vars
    }

    pub fn index(&self) -> &Arc<MonomialIndex> {
        &self.index
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// `Ẽ[m]`, or `None` past the degree.
    pub fn moment(&self, m: &Monomial) -> Option<f64> {
        if m.degree() > self.degree {
            return None;
        }
        self.index.get(m).map(|k| self.moments[k])
    }

    /// `Ẽ[p]`.
    pub fn expect(&self, p: &MultiPoly) -> Result<f64> {
        if p.variables() != &self.vars {
            return Err(Error::VariableMismatch);
        }
        let mut total = 0.0;
        for (m, c) in p.terms() {
            let v = self.moment(m).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "polynomial degree {} exceeds pseudo-distribution degree {}",
                    p.degree(),
                    self.degree
                ))
            })?;
            total += c * v;
        }
        Ok(total)
    }

    /// Side of the moment matrix.
    pub fn basis_len(&self) -> usize {
        self.index.len_up_to(self.degree / 2)
    }

    /// `M[a, b] = Ẽ[m_a m_b]` over monomials of degree `<= ℓ/2`.
    pub fn moment_matrix(&self) -> DMatrix<f64> {
        self.localizing_matrix_of(&[(0, 1.0)], self.degree / 2)
    }

    fn localizing_matrix_of(&self, terms: &[(usize, f64)], half: usize) -> DMatrix<f64> {
        let side = self.index.len_up_to(half);
        let mut m = DMatrix::zeros(side, side);
        for a in 0..side {
            for b in a..side {
                let ab = self.index.monomial(a).mul(self.index.monomial(b));
                let v: f64 = terms
                    .iter()
                    .map(|&(t, c)| {
                        let k = self.index.get(&ab.mul(self.index.monomial(t))).expect("fits");
                        c * self.moments[k]
                    })
                    .sum();
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    }

    /// `Ẽ[w_i]` for every `i`.
    pub fn w_means(&self) -> Vec<f64> {
        let nvars = self.layout.nvars();
        (0..self.layout.n)
            .map(|i| self.moment(&Monomial::var(nvars, self.layout.w(i))).expect("degree >= 1"))
            .collect()
    }

    /// `Ẽ[p · Π]` as a symmetric matrix, for a monomial `p` in the indicator
    /// variables.
    pub fn expect_pi_times(&self, p: &Monomial) -> Result<SymMatrix> {
        let d = self.layout.d;
        let nvars = self.layout.nvars();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for j in 0..d {
            for k in j..d {
                let m = p.mul(&Monomial::var(nvars, self.layout.pi(j, k)));
                out.push(self.moment(&m).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "degree {} needed, pseudo-distribution has degree {}",
                        m.degree(),
                        self.degree
                    ))
                })?);
            }
        }
        SymMatrix::from_packed(d, out)
    }

    /// Multilinear `w_S = Π_{i ∈ S} w_i`, repeated indices collapsed.
    pub fn w_monomial(&self, s: &[usize]) -> Result<Monomial> {
        let mut e = vec![0u16; self.layout.nvars()];
        for &i in s {
            if i >= self.layout.n {
                return Err(Error::InvalidArgument(format!(
                    "index {i} outside 0..{}",
                    self.layout.n
                )));
            }
            e[self.layout.w(i)] = 1;
        }
        Ok(Monomial::from_exponents(e))
    }

    /// Conditions on `w_S`: `Ẽ'[m] = Ẽ[m w_S] / Ẽ[w_S]` on monomials of
    /// degree `<= ℓ − 2k`, `k` the number of distinct indices in `S`.
    pub fn reweight(&self, s: &[usize]) -> Result<Self> {
        let ws = self.w_monomial(s)?;
        let k = ws.degree();
        if 2 * k > self.degree {
            return Err(Error::InvalidArgument(format!(
                "reweighting by {k} indicators needs degree >= {}, have {}",
                2 * k,
                self.degree
            )));
        }
        let z = self.moment(&ws).expect("degree checked");
        if z <= 1e-10 {
            return Err(Error::DegenerateReweight { value: z });
        }
        let degree = self.degree - 2 * k;
        let moments = (0..self.index.len_up_to(degree))
            .map(|a| {
                let m = self.index.monomial(a).mul(&ws);
                self.moments[self.index.get(&m).expect("fits")] / z
            })
            .collect();
        Self::new(self.layout, self.index.clone(), degree, moments)
    }

    /// Same pseudo-distribution restricted to a lower even degree.
    pub fn truncate(&self, degree: usize) -> Result<Self> {
        if degree > self.degree {
            return Err(Error::InvalidArgument(format!(
                "cannot raise degree {} to {degree}",
                self.degree
            )));
        }
        let len = self.index.len_up_to(degree);
        Self::new(self.layout, self.index.clone(), degree, self.moments[..len].to_vec())
    }

    /// `{degree, variable_names, moments: [[exponents, value], ...]}` with
    /// round-trip float formatting.
    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(self.moments.len() * (8 + 3 * self.layout.nvars()));
        out.push_str(&format!("{{\"degree\":{},\"variable_names\":[", self.degree));
        for (k, v) in self.vars.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format!("\"{v}\""));
        }
        out.push_str("],\"moments\":[");
        for (k, &v) in self.moments.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str("[[");
            let exps: Vec<String> = self.index.monomial(k).exponents().iter().map(u16::to_string).collect();
            out.push_str(&exps.join(","));
            out.push_str("],");
            out.push_str(&fmt_f64(v));
            out.push(']');
        }
        out.push_str("]}");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            degree: usize,
            variable_names: Vec<String>,
            moments: Vec<(Vec<u16>, f64)>,
        }
        let f: File = serde_json::from_str(text)?;
        let layout = VarLayout::from_names(&f.variable_names)?;
        let index = Arc::new(MonomialIndex::new(layout.nvars(), f.degree));
        let mut moments = vec![f64::NAN; index.len()];
        for (e, v) in f.moments {
            let m = Monomial::from_exponents(e);
            let k = index
                .get(&m)
                .ok_or_else(|| Error::InvalidArgument("moment outside the degree or variable count".into()))?;
            moments[k] = v;
        }
        if moments.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("missing moments".into()));
        }
        Self::new(layout, index, f.degree, moments)
    }
}

/// Outcome of [`validate`]. Violation counts use the additive slack 1e-6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub degree: usize,
    pub normalization_residual: f64,
    pub moment_min_eigenvalue: f64,
    pub max_equality_residual: f64,
    /// `+∞` when no inequality fits the degree.
    pub localizing_min_eigenvalue: f64,
    pub cauchy_schwarz_pairs: usize,
    pub cauchy_schwarz_violations: usize,
    /// Smallest `sqrt(Ẽ[f²]Ẽ[g²]) − Ẽ[fg]` seen.
    pub cauchy_schwarz_margin: f64,
    pub holder_pairs: usize,
    pub holder_violations: usize,
    pub holder_margin: f64,
}

impl ValidationReport {
    /// Residuals within `tol`, eigenvalues above `−eig_tol`, no axiom violations.
    pub fn passes(&self, tol: f64, eig_tol: f64) -> bool {
        self.normalization_residual <= tol
            && self.moment_min_eigenvalue >= -eig_tol
            && self.max_equality_residual <= tol
            && self.localizing_min_eigenvalue >= -eig_tol
            && self.cauchy_schwarz_violations == 0
            && self.holder_violations == 0
    }
}

pub const AXIOM_SLACK: f64 = 1e-6;
const CAUCHY_SCHWARZ_PAIRS: usize = 50;
const HOLDER_PAIRS: usize = 50;
const VALIDATION_SEED: u64 = 0x7a11_da7e;

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Checks `pd` against the pseudo-distribution axioms and the rows of `cs`
/// that fit its degree.
pub fn validate(pd: &PseudoDistribution, cs: &ConstraintSystem) -> Result<ValidationReport> {
    if pd.vars != cs.vars {
        return Err(Error::VariableMismatch);
    }
    let moment = pd.moment_matrix();
    let moment_min_eigenvalue = min_eigenvalue(&moment);

    let mut max_equality_residual = 0.0_f64;
    for row in &cs.equalities {
        let dg = row.poly.degree();
        if dg > pd.degree {
            continue;
        }
        for m in 0..pd.index.len_up_to(pd.degree - dg) {
            let v = pd.expect(&row.poly.mul_monomial(pd.index.monomial(m)))?;
            max_equality_residual = max_equality_residual.max(v.abs());
        }
    }

    let mut localizing_min_eigenvalue = f64::INFINITY;
    for row in &cs.inequalities {
        let dh = row.poly.degree();
        if dh > pd.degree {
            continue;
        }
        let terms: Vec<(usize, f64)> = row
            .poly
            .terms()
            .map(|(m, c)| (pd.index.get(m).expect("fits"), c))
            .collect();
        let l = pd.localizing_matrix_of(&terms, (pd.degree - dh) / 2);
        localizing_min_eigenvalue = localizing_min_eigenvalue.min(min_eigenvalue(&l));
    }

    let (cs_violations, cs_margin) = cauchy_schwarz_pairs(&moment, CAUCHY_SCHWARZ_PAIRS, VALIDATION_SEED);
    let (holder_violations, holder_margin) = holder_pairs(pd, &moment, HOLDER_PAIRS, VALIDATION_SEED + 1);

    Ok(ValidationReport {
        degree: pd.degree,
        normalization_residual: (pd.moments[0] - 1.0).abs(),
        moment_min_eigenvalue,
        max_equality_residual,
        localizing_min_eigenvalue,
        cauchy_schwarz_pairs: CAUCHY_SCHWARZ_PAIRS,
        cauchy_schwarz_violations: cs_violations,
        cauchy_schwarz_margin: cs_margin,
        holder_pairs: if pd.degree >= 4 { HOLDER_PAIRS } else { 0 },
        holder_violations,
        holder_margin,
    })
}

/// `Ẽ[fg] <= sqrt(Ẽ[f²]Ẽ[g²]) + slack` for random unit coefficient vectors
/// `f, g` over the moment-matrix basis.
pub fn cauchy_schwarz_pairs(moment: &DMatrix<f64>, pairs: usize, seed: u64) -> (usize, f64) {
    let side = moment.nrows();
    let mut rng = stream_rng(seed, 0);
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..pairs {
        let f = DVector::<f64>::from_fn(side, |_, _| rng.sample(StandardNormal)).normalize();
        let g = DVector::<f64>::from_fn(side, |_, _| rng.sample(StandardNormal)).normalize();
        let fg = f.dot(&(moment * &g));
        let ff = f.dot(&(moment * &f)).max(0.0);
        let gg = g.dot(&(moment * &g)).max(0.0);
        let m = (ff * gg).sqrt() - fg;
        margin = margin.min(m);
        if m < -AXIOM_SLACK {
            violations += 1;
        }
    }
    (violations, margin)
}

/// Hölder at `t = 2` with `f = a²`, `g = b²` for random linear forms `a, b`:
/// `Ẽ[a² b²] <= Ẽ[a⁴]^{1/2} Ẽ[b⁴]^{1/2} + slack`. Needs degree 4; the
/// pseudo-expectations are read off the moment matrix.
pub fn holder_pairs(pd: &PseudoDistribution, moment: &DMatrix<f64>, pairs: usize, seed: u64) -> (usize, f64) {
    if pd.degree < 4 {
        return (0, f64::INFINITY);
    }
    let nvars = pd.layout.nvars();
    let mut rng = stream_rng(seed, 0);
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    let square = |rng: &mut rand_chacha::ChaCha8Rng| {
        let c = DVector::<f64>::from_fn(nvars, |_, _| rng.sample(StandardNormal)).normalize();
        let mut v = DVector::<f64>::zeros(moment.nrows());
        for j in 0..nvars {
            for k in j..nvars {
                let m = Monomial::var(nvars, j).mul(&Monomial::var(nvars, k));
                let coef = if j == k { c[j] * c[j] } else { 2.0 * c[j] * c[k] };
                v[pd.index.get(&m).expect("degree two")] += coef;
            }
        }
        v
    };
    for _ in 0..pairs {
        let a2 = square(&mut rng);
        let b2 = square(&mut rng);
        let ab = a2.dot(&(moment * &b2));
        let aa = a2.dot(&(moment * &a2)).max(0.0);
        let bb = b2.dot(&(moment * &b2)).max(0.0);
        let m = (aa * bb).sqrt() - ab;
        margin = margin.min(m);
        if m < -AXIOM_SLACK {
            violations += 1;
        }
    }
    (violations, margin)
}

/// Distinct indices of a multiset, sorted.
pub fn distinct(s: &[usize]) -> Vec<usize> {
    s.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}
