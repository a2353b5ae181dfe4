//! Sparse multivariate and dense univariate polynomials over `f64`.
//!
//! Terms of a [`MultiPoly`] are kept in graded-lexicographic monomial order
//! and zero coefficients are never stored.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Exponent vector, one entry per variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u16>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Self(vec![0; nvars])
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        Self(e)
    }

    pub fn from_exponents(exponents: Vec<u16>) -> Self {
        Self(exponents)
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn pow(&self, k: u16) -> Monomial {
        Monomial(self.0.iter().map(|e| e * k).collect())
    }

    /// Evaluates the monomial at `point` (indexed like the variables).
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then larger exponent in an
    /// earlier variable wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordered list of variable names shared between polynomials.
pub type Variables = Arc<[String]>;

pub fn variables<S: AsRef<str>>(names: &[S]) -> Variables {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

/// Sparse polynomial in a fixed, named set of variables.
#[derive(Clone, PartialEq)]
pub struct MultiPoly {
    vars: Variables,
    terms: BTreeMap<Monomial, f64>,
}

impl MultiPoly {
    pub fn zero(vars: &Variables) -> Self {
        Self {
            vars: vars.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &Variables, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::one(vars.len()), c);
        p
    }

    /// The polynomial `name`.
    pub fn var(vars: &Variables, name: &str) -> Result<Self> {
        let idx = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        Ok(Self::var_at(vars, idx))
    }

    pub fn var_at(vars: &Variables, index: usize) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::var(vars.len(), index), 1.0);
        p
    }

    pub fn monomial(vars: &Variables, m: Monomial, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(m, c);
        p
    }

    pub fn variables(&self) -> &Variables {
        &self.vars
    }

    /// Adds `c · m` in place, dropping the term if it cancels.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.vars.len());
        if c == 0.0 {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                *v += c;
                if *v == 0.0 {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    fn check_vars(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.vars, &other.vars) || self.vars == other.vars {
            Ok(())
        } else {
            Err(Error::VariableMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let mut out = Self::zero(&self.vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(&self.vars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(&self.vars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Multiplies by a single monomial (shifts every exponent vector).
    pub fn mul_monomial(&self, m: &Monomial) -> Self {
        let mut out = Self::zero(&self.vars);
        for (t, c) in &self.terms {
            out.add_term(t.mul(m), *c);
        }
        out
    }

    /// Replaces the variable `name` by `with`.
    pub fn substitute(&self, name: &str, with: &MultiPoly) -> Result<Self> {
        self.check_vars(with)?;
        let idx = self
            .vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        let mut powers = vec![Self::constant(&self.vars, 1.0)];
        let mut out = Self::zero(&self.vars);
        for (m, c) in &self.terms {
            let e = m.0[idx] as usize;
            while powers.len() <= e {
                let next = powers.last().unwrap() * with;
                powers.push(next);
            }
            let mut rest = m.clone();
            rest.0[idx] = 0;
            for (t, ct) in &powers[e].terms {
                out.add_term(t.mul(&rest), c * ct);
            }
        }
        Ok(out)
    }

    /// Evaluates at a full assignment ordered like the variables.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.vars.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vars.len(),
                found: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(point)).sum())
    }

    /// Evaluates at a named assignment; every variable must be assigned and
    /// every assigned name must be a variable.
    pub fn evaluate_named(&self, assignment: &BTreeMap<String, f64>) -> Result<f64> {
        if let Some(extra) = assignment.keys().find(|k| !self.vars.contains(k)) {
            return Err(Error::UnknownVariable(extra.clone()));
        }
        let point = self
            .vars
            .iter()
            .map(|v| {
                assignment
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::UnknownVariable(v.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.evaluate(&point)
    }

    /// Largest absolute coefficient difference against `other`.
    pub fn max_coeff_diff(&self, other: &Self) -> Result<f64> {
        let d = self.try_sub(other)?;
        Ok(d.terms.values().fold(0.0, |a, c| a.max(c.abs())))
    }
}

impl std::ops::Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        self.try_add(rhs).expect("variable lists must match")
    }
}

impl std::ops::Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        self.try_sub(rhs).expect("variable lists must match")
    }
}

impl std::ops::Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        self.try_mul(rhs).expect("variable lists must match")
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, e) in self.vars.iter().zip(&m.0) {
                match e {
                    0 => {}
                    1 => write!(f, "*{v}")?,
                    _ => write!(f, "*{v}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// Dense univariate polynomial, `coeffs[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UniPoly {
    coeffs: Vec<f64>,
}

impl UniPoly {
    /// Trailing zeros are trimmed so the leading coefficient is nonzero.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            (0..n)
                .map(|k| self.coefficient(k) + other.coefficient(k))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// All odd coefficients at most `tol` in magnitude.
    pub fn is_even(&self, tol: f64) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|c| c.abs() <= tol)
    }
}
