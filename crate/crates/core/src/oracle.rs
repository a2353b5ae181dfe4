//! Exact reference recovery for small instances by span enumeration.
//!
//! Every `r`-subset of points in general position spans a candidate subspace;
//! spans holding at least `m` points are reported. The implication check
//! confirms that a large enough inlier overlap pins the span down.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{frob_dist, Projector};
use crate::rounding::{CandidateList, Provenance, Scheme};
use crate::sample::LabeledSample;

/// Absolute tolerance on `‖(I − Π) x‖₂` for span membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative singular-value floor below which an `r`-subset is degenerate.
pub const GENERAL_POSITION_TOL: f64 = 1e-8;
/// Largest `n` for unrestricted enumeration.
pub const MAX_N: usize = 24;
/// Largest `n` in span-seeding mode (`r <= 2`).
pub const MAX_N_SEEDED: usize = 64;
/// Projector distance counted as equality in the implication check.
pub const SAME_SPAN_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SubsetCandidate {
    /// Points within [`MEMBERSHIP_TOL`] of the span, sorted.
    pub indices: Vec<usize>,
    pub span_projector: Projector,
    pub inlier_overlap: usize,
}

/// Orthonormal frame of the top-`r` left singular space of the columns, or
/// `None` when the columns are rank deficient.
fn span_frame(cols: &DMatrix<f64>, r: usize) -> Option<DMatrix<f64>> {
    let svd = cols.clone().svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < r {
        return None;
    }
    let top = svd.singular_values[order[0]];
    if top <= 0.0 || svd.singular_values[order[r - 1]] <= GENERAL_POSITION_TOL * top {
        return None;
    }
    let u = svd.u.as_ref().expect("requested");
    Some(DMatrix::from_fn(cols.nrows(), r, |i, j| u[(i, order[j])]))
}

fn columns(s: &LabeledSample, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(s.d(), idx.len(), |i, j| s.points[idx[j]][i])
}

/// Lexicographic successor of a `k`-combination of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut c: Vec<usize> = (0..k).collect();
    let mut out = vec![c.clone()];
    while next_combination(&mut c, n) {
        out.push(c.clone());
    }
    out
}

/// Points of the span seeded by `seed`, or `None` if the seed is degenerate.
fn members(s: &LabeledSample, seed: &[usize], r: usize) -> Option<Vec<usize>> {
    let frame = span_frame(&columns(s, seed), r)?;
    let p = &frame * frame.transpose();
    let idx = (0..s.n())
        .filter(|&i| {
            let x = &s.points[i];
            (x - &p * x).norm() <= MEMBERSHIP_TOL
        })
        .collect();
    Some(idx)
}

/// All spans seeded by `r`-subsets that hold at least `m` points, ordered by
/// point count (descending) and then by index set. The projector of each span
/// is refit on all its points.
pub fn brute_force_spans(s: &LabeledSample, r: usize, m: usize, exec: Execution) -> Result<Vec<SubsetCandidate>> {
    let n = s.n();
    if r == 0 || r >= s.d() {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..{}", s.d())));
    }
    if n > MAX_N && !(r <= 2 && n <= MAX_N_SEEDED) {
        return Err(Error::EnumerationGuard(format!(
            "n = {n} exceeds {MAX_N}; span-seeding mode covers r <= 2 with n <= {MAX_N_SEEDED}"
        )));
    }
    let seeds = combinations(n, r);
    let found = exec.map_slice(&seeds, |seed| members(s, seed, r).filter(|idx| idx.len() >= m));
    // merge by index set; BTreeMap keeps the merge order independent of the policy
    let mut spans: BTreeMap<Vec<usize>, ()> = BTreeMap::new();
    for idx in found.into_iter().flatten() {
        spans.insert(idx, ());
    }
    let mut out = Vec::with_capacity(spans.len());
    for idx in spans.into_keys() {
        let frame = span_frame(&columns(s, &idx), r).expect("contains a general-position seed");
        let span_projector = Projector::from_frame(&frame)?;
        let inlier_overlap = idx.iter().filter(|&&i| s.inlier_mask[i]).count();
        out.push(SubsetCandidate {
            indices: idx,
            span_projector,
            inlier_overlap,
        });
    }
    out.sort_by(|a, b| b.indices.len().cmp(&a.indices.len()).then_with(|| a.indices.cmp(&b.indices)));
    Ok(out)
}

/// [`brute_force_spans`] as a candidate list, deduplicated by projector.
pub fn brute_force_recover(s: &LabeledSample, r: usize, m: usize, exec: Execution) -> Result<CandidateList> {
    let spans = brute_force_spans(s, r, m, exec)?;
    to_candidate_list(&spans, r)
}

pub fn to_candidate_list(spans: &[SubsetCandidate], r: usize) -> Result<CandidateList> {
    let mut list = CandidateList::new(r);
    for c in spans {
        list.push(
            c.span_projector.clone(),
            Provenance {
                scheme: Scheme::Oracle,
                multiset: c.indices.clone(),
                seed: 0,
                raw: None,
            },
        )?;
    }
    Ok(list)
}

#[derive(Clone, Debug, Serialize)]
pub struct IntersectionVerdict {
    /// `|T ∩ I| / |I|`.
    pub overlap_fraction: f64,
    /// Every point of `T` lies in the candidate's range.
    pub membership_ok: bool,
    /// `|T ∩ I| >= α |I|`.
    pub precondition: bool,
    /// No tested direction in `range(Π*)` annihilates `α |I|` or more inliers.
    /// Only directions derived from the candidate are tested, so this is a
    /// heuristic.
    pub anti_concentration: bool,
    pub directions_tested: usize,
    pub distance: f64,
    pub same_span: bool,
    /// The implication "overlap and anti-concentration ⇒ same span" holds.
    pub consistent: bool,
}

/// Checks that a candidate holding at least `α |I|` inliers equals the
/// planted projector. The tested directions are the unit vectors of
/// `range(Π*)` on which `cand` falls short of the identity; every inlier in
/// `range(cand)` is orthogonal to them.
pub fn high_intersection_check(t: &[usize], cand: &Projector, s: &LabeledSample) -> Result<IntersectionVerdict> {
    let truth = &s.planted;
    let inliers = s.inlier_indices();
    let k = inliers.len();
    let overlap = t.iter().filter(|&&i| s.inlier_mask[i]).count();
    let overlap_fraction = if k == 0 { 0.0 } else { overlap as f64 / k as f64 };
    let membership_ok = t.iter().all(|&i| cand.residual(&s.points[i]) <= MEMBERSHIP_TOL);
    let needed = s.alpha * k as f64;
    let precondition = overlap as f64 >= needed - 1e-12;

    let frame = truth.frame();
    let inner = frame.transpose() * cand.matrix().to_dmatrix() * &frame;
    let eig = nalgebra::SymmetricEigen::new(inner);
    let mut directions = Vec::new();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < 1.0 - 1e-9 {
            directions.push(&frame * eig.eigenvectors.column(j));
        }
    }
    let anti_concentration = directions.iter().all(|v| {
        let zeros = inliers
            .iter()
            .filter(|&&i| v.dot(&s.points[i]).abs() <= MEMBERSHIP_TOL)
            .count();
        (zeros as f64) < needed
    });

    let distance = frob_dist(cand.matrix(), truth.matrix())?;
    let same_span = distance <= SAME_SPAN_TOL;
    let consistent = !(membership_ok && precondition && anti_concentration) || same_span;
    Ok(IntersectionVerdict {
        overlap_fraction,
        membership_ok,
        precondition,
        anti_concentration,
        directions_tested: directions.len(),
        distance,
        same_span,
        consistent,
    })
}
