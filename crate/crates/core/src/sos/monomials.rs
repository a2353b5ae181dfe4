//! Indexing of all monomials up to a degree, in graded-lex order.
//!
//! Because the order is graded, the monomials of degree `<= k` form a prefix
//! of the index for every `k`; moment vectors of lower degree are prefixes of
//! higher-degree ones.

use std::collections::HashMap;

use crate::poly::Monomial;

#[derive(Clone, Debug)]
pub struct MonomialIndex {
    nvars: usize,
    degree: usize,
    monomials: Vec<Monomial>,
    lookup: HashMap<Monomial, u32>,
    /// `prefix[k]` = number of monomials of degree `<= k`.
    prefix: Vec<usize>,
}

/// Number of monomials of degree `<= degree` in `nvars` variables,
/// `C(nvars + degree, degree)`.
pub fn count_up_to(nvars: usize, degree: usize) -> usize {
    let mut c: u128 = 1;
    for k in 1..=degree as u128 {
        c = c * (nvars as u128 + k) / k;
    }
    c as usize
}

impl MonomialIndex {
    pub fn new(nvars: usize, degree: usize) -> Self {
        let mut monomials = Vec::with_capacity(count_up_to(nvars, degree));
        let mut prefix = Vec::with_capacity(degree + 1);
        for deg in 0..=degree {
            let start = monomials.len();
            let mut exps = vec![0u16; nvars];
            push_exact(&mut exps, 0, deg, &mut monomials);
            monomials[start..].sort();
            prefix.push(monomials.len());
        }
        let lookup = monomials
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), k as u32))
            .collect();
        Self {
            nvars,
            degree,
            monomials,
            lookup,
            prefix,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Number of monomials of degree `<= k`.
    pub fn len_up_to(&self, k: usize) -> usize {
        self.prefix[k.min(self.degree)]
    }

    pub fn monomial(&self, k: usize) -> &Monomial {
        &self.monomials[k]
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.lookup.get(m).map(|&k| k as usize)
    }

    /// Index of the product of monomials `a` and `b`.
    pub fn product(&self, a: usize, b: usize) -> Option<usize> {
        self.get(&self.monomials[a].mul(&self.monomials[b]))
    }
}

fn push_exact(exps: &mut Vec<u16>, var: usize, remaining: usize, out: &mut Vec<Monomial>) {
    if var + 1 == exps.len() {
        exps[var] = remaining as u16;
        out.push(Monomial::from_exponents(exps.clone()));
        exps[var] = 0;
        return;
    }
    if exps.is_empty() {
        if remaining == 0 {
            out.push(Monomial::from_exponents(vec![]));
        }
        return;
    }
    for e in (0..=remaining).rev() {
        exps[var] = e as u16;
        push_exact(exps, var + 1, remaining - e, out);
    }
    exps[var] = 0;
}
