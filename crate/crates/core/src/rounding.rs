//! Rounding a pseudo-distribution to a short list of projectors.
//!
//! Both schemes draw index multisets `S` with probability proportional to
//! `Ẽ[w_S]` and emit the conditional estimate `Ẽ[w_S Π] / Ẽ[w_S]` snapped to
//! the nearest rank-`r` projector.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::linalg::{frob_dist, top_r_snap, Projector, SymMatrix};
use crate::poly::Monomial;
use crate::sos::PseudoDistribution;

/// Candidates closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-6;
/// `Ẽ[w_i]` at or below this counts as zero.
pub const WEIGHT_FLOOR: f64 = 1e-10;
/// Upper bound on the large-list default draw count.
pub const LARGE_LIST_DRAW_CAP: usize = 512;
/// Resamples of a multiset whose reweighting degenerates midway.
pub const MAX_RETRIES: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Votes,
    LargeList,
    Oracle,
    Baseline,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Votes => "votes",
            Scheme::LargeList => "large-list",
            Scheme::Oracle => "oracle",
            Scheme::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "votes" => Ok(Scheme::Votes),
            "large-list" => Ok(Scheme::LargeList),
            "oracle" => Ok(Scheme::Oracle),
            "baseline" => Ok(Scheme::Baseline),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Where a candidate came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub scheme: Scheme,
    /// Drawn index multiset (a single index for votes, the point set for the
    /// oracle, empty for the baseline).
    pub multiset: Vec<usize>,
    pub seed: u64,
    /// Unsnapped estimate, when there is one.
    pub raw: Option<SymMatrix>,
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub projector: Projector,
    /// Every draw that produced this projector, in draw order.
    pub provenance: Vec<Provenance>,
}

#[derive(Clone, Debug)]
pub struct CandidateList {
    pub candidates: Vec<Candidate>,
    pub target_rank: usize,
}

impl CandidateList {
    pub fn new(target_rank: usize) -> Self {
        Self {
            candidates: Vec::new(),
            target_rank,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Total number of draws behind the list (before deduplication).
    pub fn draws(&self) -> usize {
        self.candidates.iter().map(|c| c.provenance.len()).sum()
    }

    /// Adds `projector`, merging into an existing candidate within
    /// [`DEDUP_TOL`].
    pub fn push(&mut self, projector: Projector, provenance: Provenance) -> Result<()> {
        for c in &mut self.candidates {
            if frob_dist(c.projector.matrix(), projector.matrix())? <= DEDUP_TOL {
                c.provenance.push(provenance);
                return Ok(());
            }
        }
        self.candidates.push(Candidate {
            projector,
            provenance: vec![provenance],
        });
        Ok(())
    }

    pub fn projectors(&self) -> impl Iterator<Item = &Projector> {
        self.candidates.iter().map(|c| &c.projector)
    }

    /// JSON array of `{projector, scheme, multiset, draws, distance_to_truth}`;
    /// `multiset` is the first draw and `draws` lists all of them.
    pub fn to_json_value(&self, truth: Option<&Projector>) -> Result<Value> {
        let mut out = Vec::with_capacity(self.len());
        for c in &self.candidates {
            let first = &c.provenance[0];
            let mut obj = json!({
                "projector": c.projector.matrix().to_rows(),
                "scheme": first.scheme.as_str(),
                "multiset": first.multiset,
                "seed": first.seed,
                "draws": c.provenance.iter().map(|p| p.multiset.clone()).collect::<Vec<_>>(),
            });
            if let Some(t) = truth {
                obj["distance_to_truth"] = json!(frob_dist(c.projector.matrix(), t.matrix())?);
            }
            out.push(obj);
        }
        Ok(Value::Array(out))
    }
}

/// `min_c ‖c − truth‖_F` over the list.
pub fn list_error(cl: &CandidateList, truth: &Projector) -> Result<f64> {
    if cl.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut best = f64::INFINITY;
    for p in cl.projectors() {
        best = best.min(frob_dist(p.matrix(), truth.matrix())?);
    }
    Ok(best)
}

/// `ceil(2 / α)`.
pub fn default_vote_draws(alpha: f64) -> usize {
    (2.0 / alpha).ceil() as usize
}

/// `ceil(2 / α^t)`, capped at [`LARGE_LIST_DRAW_CAP`].
pub fn default_large_list_draws(alpha: f64, t: usize) -> usize {
    let raw = (2.0 / alpha.powi(t as i32)).ceil();
    if raw >= LARGE_LIST_DRAW_CAP as f64 {
        LARGE_LIST_DRAW_CAP
    } else {
        raw as usize
    }
}

/// `Ẽ[w_i]` clamped at zero, with an error when nothing is left.
fn draw_weights(pd: &PseudoDistribution) -> Result<Vec<f64>> {
    let w: Vec<f64> = pd
        .w_means()
        .into_iter()
        .map(|v| if v > WEIGHT_FLOOR { v } else { 0.0 })
        .collect();
    if w.iter().sum::<f64>() <= WEIGHT_FLOOR {
        return Err(Error::DegeneratePseudo("every Ẽ[w_i] vanishes".into()));
    }
    Ok(w)
}

/// Index drawn with probability `weights[i] / Σ weights`.
fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// `Ẽ[w_i Π] / Ẽ[w_i]`, or the zero matrix when `Ẽ[w_i]` vanishes.
pub fn vote_estimate(pd: &PseudoDistribution, i: usize) -> Result<SymMatrix> {
    let wi = pd.w_monomial(&[i])?;
    let z = pd.moment(&wi).expect("degree >= 1");
    if z <= WEIGHT_FLOOR {
        return Ok(SymMatrix::zeros(pd.layout().d));
    }
    Ok(pd.expect_pi_times(&wi)?.scale(1.0 / z))
}

/// `Π̂_i` for every `i`.
pub fn vote_estimates(pd: &PseudoDistribution) -> Result<Vec<SymMatrix>> {
    (0..pd.layout().n).map(|i| vote_estimate(pd, i)).collect()
}

/// Rounding by votes: `draws` indices i.i.d. with probability proportional to
/// `Ẽ[w_i]`, each contributing `Π̂_i` snapped to rank `r`. Draw `k` uses RNG
/// stream `k` under `seed`.
pub fn round_by_votes(
    pd: &PseudoDistribution,
    r: usize,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<CandidateList> {
    if pd.degree() < 4 {
        return Err(Error::DegreeTooLow {
            row: "rounding by votes".into(),
            degree: pd.degree(),
            required: 4,
        });
    }
    let weights = draw_weights(pd)?;
    let picks: Vec<usize> = (0..draws)
        .map(|k| categorical(&weights, &mut stream_rng(seed, k as u64)))
        .collect();
    let drawn = exec.map_slice(&picks, |&i| -> Result<(SymMatrix, Projector)> {
        let raw = vote_estimate(pd, i)?;
        let snap = top_r_snap(&raw, r)?;
        Ok((raw, snap.projector))
    });
    let mut list = CandidateList::new(r);
    for (i, res) in picks.into_iter().zip(drawn) {
        let (raw, projector) = res?;
        list.push(
            projector,
            Provenance {
                scheme: Scheme::Votes,
                multiset: vec![i],
                seed,
                raw: Some(raw),
            },
        )?;
    }
    Ok(list)
}

/// One multiset of size `t` by sequential conditioning, so that
/// `P(S) ∝ Ẽ[w_S]` up to the multiset coefficient. Returns `None` when a
/// conditioning step degenerates.
fn draw_multiset<R: Rng + ?Sized>(pd: &PseudoDistribution, t: usize, rng: &mut R) -> Result<Option<Vec<usize>>> {
    let n = pd.layout().n;
    let nvars = pd.layout().nvars();
    let mut s: Vec<usize> = Vec::with_capacity(t);
    for _ in 0..t {
        let base = pd.w_monomial(&s)?;
        let z = pd.moment(&base).expect("degree checked");
        if z <= WEIGHT_FLOOR {
            return Ok(None);
        }
        // Ẽ[w_i w_S] / Ẽ[w_S]; repeated indices collapse since w_i² = w_i.
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let mut e = base.exponents().to_vec();
                e[pd.layout().w(i)] = 1;
                let v = pd.moment(&Monomial::from_exponents(e)).expect("degree checked") / z;
                if v > WEIGHT_FLOOR {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        debug_assert_eq!(base.nvars(), nvars);
        if weights.iter().sum::<f64>() <= WEIGHT_FLOOR {
            return Ok(None);
        }
        s.push(categorical(&weights, rng));
    }
    Ok(Some(s))
}

/// `Π̂_S = Ẽ[w_S Π] / Ẽ[w_S]` through [`PseudoDistribution::reweight`].
pub fn conditional_estimate(pd: &PseudoDistribution, s: &[usize]) -> Result<SymMatrix> {
    let cond = pd.reweight(s)?;
    cond.expect_pi_times(&Monomial::one(pd.layout().nvars()))
}

/// Large-list rounding: `draws` multisets of size `t`, each conditioned on and
/// snapped. A multiset whose conditioning degenerates is redrawn from a fresh
/// stream, at most [`MAX_RETRIES`] times.
pub fn round_large_list(
    pd: &PseudoDistribution,
    t: usize,
    draws: usize,
    r: usize,
    seed: u64,
    exec: Execution,
) -> Result<CandidateList> {
    if t == 0 {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    if pd.degree() < 2 * t + 2 {
        return Err(Error::DegreeTooLow {
            row: format!("large-list rounding with t = {t}"),
            degree: pd.degree(),
            required: 2 * t + 2,
        });
    }
    draw_weights(pd)?;
    let drawn = exec.map_range(draws, |k| -> Result<(Vec<usize>, SymMatrix, Projector)> {
        let mut last = Error::DegeneratePseudo(format!("draw {k}: every multiset degenerated"));
        for retry in 0..=MAX_RETRIES {
            let mut rng = stream_rng(seed, k as u64 + (retry << 32));
            let Some(s) = draw_multiset(pd, t, &mut rng)? else {
                continue;
            };
            match conditional_estimate(pd, &s) {
                Ok(raw) => {
                    let p = top_r_snap(&raw, r)?.projector;
                    return Ok((s, raw, p));
                }
                Err(e @ Error::DegenerateReweight { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    });
    let mut list = CandidateList::new(r);
    for res in drawn {
        let (s, raw, projector) = res?;
        list.push(
            projector,
            Provenance {
                scheme: Scheme::LargeList,
                multiset: s,
                seed,
                raw: Some(raw),
            },
        )?;
    }
    Ok(list)
}

/// `count` uniformly random rank-`r` projectors.
pub fn random_baseline(d: usize, r: usize, count: usize, seed: u64) -> Result<CandidateList> {
    let mut list = CandidateList::new(r);
    for k in 0..count {
        let p = Projector::random(d, r, &mut stream_rng(seed, k as u64))?;
        list.push(
            p,
            Provenance {
                scheme: Scheme::Baseline,
                multiset: Vec::new(),
                seed,
                raw: None,
            },
        )?;
    }
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::PROJECTOR_TOL;
    use crate::sample::{generate, second_subspace, InstanceConfig};
    use crate::sos::{MonomialIndex, VarLayout};
    use std::sync::Arc;

    /// Integral point with `w = mask`, `Π = p`.
    fn point(layout: VarLayout, mask: &[bool], p: &Projector) -> Vec<f64> {
        let w: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        layout.assignment(&w, p.matrix())
    }

    fn small_layout(n: usize) -> VarLayout {
        VarLayout::new(n, 2)
    }

    fn rank_one(x: f64, y: f64) -> Projector {
        let v = nalgebra::DVector::from_vec(vec![x, y]).normalize();
        Projector::new(SymMatrix::outer(&v), 1, PROJECTOR_TOL).unwrap()
    }

    /// Two atoms over 6 points: points 0..3 on `a`, points 3..6 on `b`.
    fn two_atoms(degree: usize) -> (PseudoDistribution, Projector, Projector) {
        let layout = small_layout(6);
        let index = Arc::new(MonomialIndex::new(layout.nvars(), degree));
        let a = rank_one(1.0, 0.3);
        let b = rank_one(-0.2, 1.0);
        let pa = point(layout, &[true, true, true, false, false, false], &a);
        let pb = point(layout, &[false, false, false, true, true, true], &b);
        let pd = PseudoDistribution::mixture(layout, index, degree, &[(0.5, pa), (0.5, pb)]).unwrap();
        (pd, a, b)
    }

    #[test]
    fn draw_defaults() {
        assert_eq!(default_vote_draws(0.5), 4);
        assert_eq!(default_vote_draws(0.3), 7);
        assert_eq!(default_large_list_draws(0.5, 2), 8);
        assert_eq!(default_large_list_draws(0.1, 3), LARGE_LIST_DRAW_CAP);
    }

    #[test]
    fn dirac_votes_return_truth() {
        let s = generate(&InstanceConfig::standard(1)).unwrap();
        let layout = VarLayout::new(s.n(), s.d());
        let index = Arc::new(MonomialIndex::new(layout.nvars(), 4));
        let pd = PseudoDistribution::dirac(layout, index, 4, &point(layout, &s.inlier_mask, &s.planted)).unwrap();
        let list = round_by_votes(&pd, 2, 20, 3, Execution::Sequential).unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list.draws(), 20);
        assert!(list_error(&list, &s.planted).unwrap() <= 1e-8);
        for p in &list.candidates[0].provenance {
            assert!(s.inlier_mask[p.multiset[0]]);
        }
    }

    #[test]
    fn mixture_votes_cover_both_atoms() {
        let (pd, a, b) = two_atoms(4);
        let list = round_by_votes(&pd, 1, 40, 9, Execution::Sequential).unwrap();
        assert_eq!(list.len(), 2);
        assert!(list_error(&list, &a).unwrap() <= 1e-12);
        assert!(list_error(&list, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn draw_frequencies_match_weights() {
        // integral point with three active indices of six
        let layout = small_layout(6);
        let index = Arc::new(MonomialIndex::new(layout.nvars(), 4));
        let mask = [true, false, true, false, true, false];
        let pd = PseudoDistribution::dirac(layout, index, 4, &point(layout, &mask, &rank_one(1.0, 0.0))).unwrap();
        let weights = draw_weights(&pd).unwrap();
        let trials = 10_000;
        let mut counts = [0usize; 6];
        for k in 0..trials {
            counts[categorical(&weights, &mut stream_rng(5, k))] += 1;
        }
        let p = 1.0 / 3.0;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let expect = if mask[i] { p } else { 0.0 };
            assert!((c as f64 / trials as f64 - expect).abs() <= 3.0 * se, "{i}: {c}");
        }
    }

    #[test]
    fn large_list_stays_inside_one_atom() {
        let (pd, a, b) = two_atoms(6);
        let list = round_large_list(&pd, 2, 30, 1, 4, Execution::Sequential).unwrap();
        assert_eq!(list.len(), 2);
        for c in &list.candidates {
            let exact = if c.projector == a || frob_dist(c.projector.matrix(), a.matrix()).unwrap() < 1e-12 {
                &a
            } else {
                &b
            };
            for p in &c.provenance {
                let side = p.multiset[0] < 3;
                assert!(p.multiset.iter().all(|&i| (i < 3) == side));
                let raw = p.raw.as_ref().unwrap();
                assert!(frob_dist(raw, exact.matrix()).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn large_list_needs_degree() {
        let (pd, _, _) = two_atoms(4);
        assert!(matches!(
            round_large_list(&pd, 2, 3, 1, 0, Execution::Sequential),
            Err(Error::DegreeTooLow { required: 6, .. })
        ));
    }

    #[test]
    fn large_list_t1_matches_votes() {
        let (pd, _, _) = two_atoms(4);
        let weights = draw_weights(&pd).unwrap();
        for k in 0..50u64 {
            let s = draw_multiset(&pd, 1, &mut stream_rng(11, k)).unwrap().unwrap();
            assert_eq!(s[0], categorical(&weights, &mut stream_rng(11, k)));
        }
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let layout = small_layout(3);
        let index = Arc::new(MonomialIndex::new(layout.nvars(), 4));
        let pd = PseudoDistribution::dirac(layout, index, 4, &point(layout, &[false; 3], &rank_one(1.0, 1.0))).unwrap();
        assert!(matches!(
            round_by_votes(&pd, 1, 2, 0, Execution::Sequential),
            Err(Error::DegeneratePseudo(_))
        ));
    }

    #[test]
    fn list_error_cases() {
        let s = generate(&InstanceConfig::standard(2)).unwrap();
        let mut list = CandidateList::new(2);
        assert!(matches!(list_error(&list, &s.planted), Err(Error::EmptyList)));
        // orthogonal complement: disjoint ranges
        let comp = top_r_snap(&s.planted.complement(), 2).unwrap().projector;
        list.push(comp, Provenance { scheme: Scheme::Oracle, multiset: vec![], seed: 0, raw: None })
            .unwrap();
        assert!((list_error(&list, &s.planted).unwrap() - 2.0).abs() <= 1e-9);
        let other = second_subspace(&InstanceConfig::standard(2)).unwrap();
        list.push(s.planted.clone(), Provenance { scheme: Scheme::Oracle, multiset: vec![], seed: 0, raw: None })
            .unwrap();
        assert_eq!(list_error(&list, &s.planted).unwrap(), 0.0);
        assert!(list_error(&list, &other).unwrap() > 0.0);
        let js = list.to_json_value(Some(&s.planted)).unwrap();
        assert_eq!(js.as_array().unwrap().len(), 2);
        assert_eq!(js[1]["distance_to_truth"], 0.0);
    }

    #[test]
    fn votes_are_deterministic_across_policies() {
        let (pd, _, _) = two_atoms(4);
        let a = round_by_votes(&pd, 1, 16, 21, Execution::Sequential).unwrap();
        let b = round_by_votes(&pd, 1, 16, 21, Execution::Parallel).unwrap();
        let ms = |l: &CandidateList| -> Vec<Vec<Vec<usize>>> {
            l.candidates.iter().map(|c| c.provenance.iter().map(|p| p.multiset.clone()).collect()).collect()
        };
        assert_eq!(ms(&a), ms(&b));
    }
}
