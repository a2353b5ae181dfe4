//! Minimum-norm pseudo-distribution by ADMM on the moment SDP.
//!
//! The moments `y` (with `y_0 = 1` pinned) are split from a PSD copy `X` of
//! the moment matrix, one PSD copy per localizing matrix, and a zero block for
//! equality rows the moment-matrix face does not already enforce. `X` lives
//! in the face `{U Z Uᵀ : Z ⪰ 0}` where the columns of `U` span the orthogonal
//! complement of the face generators, so projecting onto it is one
//! eigendecomposition of `Uᵀ W U`. The objective `Σ y_{w_i}²` is kept exactly
//! in the `y`-update, which is a linear solve with a diagonal-plus-low-rank
//! matrix.

use std::time::{Duration, Instant};

use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::pseudo::PseudoDistribution;
use super::sdp::SdpInstance;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Frobenius norm of all constraint violations at exit.
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Largest objective change over the last iteration at exit.
    pub objective_tol: f64,
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Rebalance `rho` against the residual ratio every `adapt_every`
    /// iterations. Off by default: on the moment SDPs here a fixed small
    /// penalty converges several times faster.
    pub adaptive_rho: bool,
    /// Period of the residual trace, plateau test and penalty update.
    pub adapt_every: usize,
    /// Iterations before a residual plateau is reported as infeasibility.
    pub infeasible_after: usize,
    pub plateau_level: f64,
    pub time_budget: Option<Duration>,
    pub exec: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            primal_tol: 1e-7,
            dual_tol: 1e-6,
            objective_tol: 1e-8,
            rho: 0.1,
            relaxation: 1.6,
            adaptive_rho: false,
            adapt_every: 50,
            infeasible_after: 5_000,
            plateau_level: 1e-3,
            time_budget: Some(Duration::from_secs(300)),
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub rho: f64,
    pub seconds: f64,
    /// Dimension of the face the moment matrix is confined to.
    pub face_dim: usize,
    /// Primal residual every `adapt_every` iterations.
    pub residual_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub pd: PseudoDistribution,
    pub stats: SolveStats,
}

fn par_of(exec: Execution) -> Par {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return Par::rayon(0);
    }
    let _ = exec;
    Par::Seq
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
///
/// faer's divide-and-conquer occasionally fails on very sparse, nearly
/// low-rank inputs (the first iterates are exactly that). The fallbacks are
/// the sequential path, the same decomposition of `A + σI` shifted back, and
/// nalgebra's QL iteration. Every result must reproduce the trace of `A`.
fn sym_eig(a: MatRef<'_, f64>, par: Par) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let mut scale: f64 = 0.0;
    let mut trace = 0.0;
    for j in 0..n {
        trace += a[(j, j)];
        for i in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(Error::DegeneratePseudo("non-finite iterate".into()));
            }
            scale = scale.max(v.abs());
        }
    }
    let consistent = |vals: &[f64]| (vals.iter().sum::<f64>() - trace).abs() <= 1e-9 * (n as f64) * scale.max(1e-300);
    let attempt = |par: Par| faer_eig(a, par).filter(|(vals, _)| consistent(vals));
    if let Some(out) = attempt(par) {
        return Ok(out);
    }
    if par != Par::Seq {
        if let Some(out) = attempt(Par::Seq) {
            return Ok(out);
        }
    }
    let sigma = scale.max(f64::MIN_POSITIVE);
    let shifted = Mat::<f64>::from_fn(n, n, |i, j| if i == j { a[(i, j)] + sigma } else { a[(i, j)] });
    if let Some((vals, vecs)) = faer_eig(shifted.as_ref(), Par::Seq) {
        let vals: Vec<f64> = vals.into_iter().map(|v| v - sigma).collect();
        if consistent(&vals) {
            return Ok((vals, vecs));
        }
    }
    let m = DMatrix::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let eig = nalgebra::SymmetricEigen::try_new(m, 1e-12, 0)
        .filter(|e| e.eigenvalues.iter().chain(e.eigenvectors.iter()).all(|v| v.is_finite()))
        .filter(|e| consistent(e.eigenvalues.as_slice()))
        .ok_or_else(|| Error::DegeneratePseudo("eigendecomposition failed".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

/// `None` on a reported failure or a non-finite result.
fn faer_eig(a: MatRef<'_, f64>, par: Par) -> Option<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let req = evd::self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, par, Default::default());
    let mut buf = faer::dyn_stack::MemBuffer::new(req);
    evd::self_adjoint_evd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        par,
        faer::dyn_stack::MemStack::new(&mut buf),
        Default::default(),
    )
    .ok()?;
    let vals: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let finite = vals.iter().all(|v| v.is_finite()) && (0..n).all(|j| (0..n).all(|i| u[(i, j)].is_finite()));
    finite.then_some((vals, u))
}

/// Orthonormal basis of the complement of the span of the face generators.
fn face_basis(sdp: &SdpInstance, par: Par) -> Result<Mat<f64>> {
    let n = sdp.side;
    if sdp.face.is_empty() {
        return Ok(Mat::identity(n, n));
    }
    let mut k = Mat::<f64>::zeros(n, sdp.face.len());
    for (c, v) in sdp.face.iter().enumerate() {
        let norm = v.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        for &(r, x) in v {
            k[(r as usize, c)] = x / norm;
        }
    }
    let mut g = Mat::<f64>::zeros(n, n);
    matmul(g.as_mut(), Accum::Replace, k.as_ref(), k.transpose(), 1.0, par);
    let (vals, vecs) = sym_eig(g.as_ref(), par)?;
    let tol = 1e-9 * vals.last().copied().unwrap_or(1.0).max(1.0);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] <= tol).collect();
    if keep.is_empty() {
        return Err(Error::Infeasible(
            "equality rows force the moment matrix to zero".into(),
        ));
    }
    Ok(Mat::from_fn(n, keep.len(), |i, j| vecs[(i, keep[j])]))
}

/// Stacked rows of the explicit equalities and the weighted localizing
/// entries, with the `y_0` column split off.
struct Rows {
    ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    col0: Vec<f64>,
}

impl Rows {
    fn len(&self) -> usize {
        self.col0.len()
    }

    fn push(&mut self, terms: &[(u32, f64)], weight: f64) {
        let mut c0 = 0.0;
        for &(c, v) in terms {
            if c == 0 {
                c0 += weight * v;
            } else {
                self.cols.push(c);
                self.vals.push(weight * v);
            }
        }
        self.col0.push(c0);
        self.ptr.push(self.cols.len());
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.ptr[r]..self.ptr[r + 1]).map(move |k| (self.cols[k] as usize, self.vals[k]))
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(c, v)| v * y[c]).sum();
        }
    }

    fn apply_t_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += scale * v * xr;
                }
            }
        }
    }
}

/// Rows beyond this use conjugate gradients instead of Woodbury.
const WOODBURY_LIMIT: usize = 3000;

/// Solver for `(D + ρ Bᵀ B) y = b` over the free moments.
enum Normal {
    Diagonal,
    Woodbury(Cholesky<f64, nalgebra::Dyn>),
    Cg,
}

struct Admm<'a> {
    sdp: &'a SdpInstance,
    opts: &'a SolverOptions,
    par: Par,
    u: Mat<f64>,
    counts: Vec<f64>,
    is_w: Vec<bool>,
    rows: Rows,
    explicit: usize,
    /// `(block, a, b)` for every localizing row.
    loc_rows: Vec<(usize, usize, usize)>,
    rho: f64,
    diag: Vec<f64>,
    normal: Normal,
}

impl<'a> Admm<'a> {
    fn new(sdp: &'a SdpInstance, opts: &'a SolverOptions) -> Result<Self> {
        let par = par_of(opts.exec);
        let u = face_basis(sdp, par)?;
        let nm = sdp.num_moments();
        let mut counts = vec![0.0; nm];
        let mut k = 0;
        for a in 0..sdp.side {
            for b in a..sdp.side {
                counts[sdp.hankel[k] as usize] += if a == b { 1.0 } else { 2.0 };
                k += 1;
            }
        }
        if let Some(missing) = counts.iter().skip(1).position(|&c| c == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "moment {} is outside the moment matrix",
                missing + 1
            )));
        }
        let mut is_w = vec![false; nm];
        for &w in &sdp.objective {
            is_w[w as usize] = true;
        }
        let mut rows = Rows {
            ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            col0: Vec::new(),
        };
        // every row is rescaled to unit coefficient norm; the cones are
        // scale-invariant and the splitting is far better conditioned
        for r in sdp.explicit_equalities() {
            rows.push(&r.terms, 1.0 / row_norm(&r.terms));
        }
        let explicit = rows.len();
        let mut loc_rows = Vec::new();
        for (bi, block) in sdp.localizing.iter().enumerate() {
            let scale = 1.0 / block.entries.iter().map(|e| row_norm(e)).fold(0.0, f64::max);
            let mut e = 0;
            for a in 0..block.side {
                for b in a..block.side {
                    let w = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
                    rows.push(&block.entries[e], w * scale);
                    loc_rows.push((bi, a, b));
                    e += 1;
                }
            }
        }
        let mut admm = Self {
            sdp,
            opts,
            par,
            u,
            counts,
            is_w,
            rows,
            explicit,
            loc_rows,
            rho: opts.rho,
            diag: Vec::new(),
            normal: Normal::Diagonal,
        };
        admm.factor()?;
        Ok(admm)
    }

    fn factor(&mut self) -> Result<()> {
        let rho = self.rho;
        self.diag = self
            .counts
            .iter()
            .zip(&self.is_w)
            .map(|(&c, &w)| rho * c + if w { 2.0 } else { 0.0 })
            .collect();
        let p = self.rows.len();
        self.normal = if p == 0 {
            Normal::Diagonal
        } else if p <= WOODBURY_LIMIT {
            // S = I/ρ + B D⁻¹ Bᵀ, accumulated column by column of B
            let nm = self.diag.len();
            let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nm];
            for r in 0..p {
                for (c, v) in self.rows.row(r) {
                    by_col[c].push((r, v));
                }
            }
            let mut s = DMatrix::<f64>::identity(p, p) / rho;
            for (c, entries) in by_col.iter().enumerate() {
                let inv = 1.0 / self.diag[c];
                for &(r1, v1) in entries {
                    for &(r2, v2) in entries {
                        s[(r1, r2)] += v1 * v2 * inv;
                    }
                }
            }
            Normal::Woodbury(Cholesky::new(s).ok_or_else(|| {
                Error::DegeneratePseudo("normal-equation factorization failed".into())
            })?)
        } else {
            Normal::Cg
        };
        Ok(())
    }

    /// Solves for the free moments in place; `y[0]` is untouched.
    fn solve_normal(&self, rhs: &[f64], y: &mut [f64]) {
        let p = self.rows.len();
        match &self.normal {
            Normal::Diagonal => {
                for k in 1..y.len() {
                    y[k] = rhs[k] / self.diag[k];
                }
            }
            Normal::Woodbury(chol) => {
                let mut t: Vec<f64> = rhs.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
                t[0] = 0.0;
                let mut bt = vec![0.0; p];
                self.rows.apply(&t, &mut bt);
                let z = chol.solve(&DVector::from_vec(bt));
                let mut corr = vec![0.0; t.len()];
                self.rows.apply_t_add(z.as_slice(), 1.0, &mut corr);
                for k in 1..y.len() {
                    y[k] = t[k] - corr[k] / self.diag[k];
                }
            }
            Normal::Cg => self.cg(rhs, y),
        }
    }

    /// Jacobi-preconditioned conjugate gradients, warm-started from `y`.
    fn cg(&self, rhs: &[f64], y: &mut [f64]) {
        let n = y.len();
        let p = self.rows.len();
        let mut pre = self.diag.clone();
        for r in 0..p {
            for (c, v) in self.rows.row(r) {
                pre[c] += self.rho * v * v;
            }
        }
        let mut tmp = vec![0.0; p];
        let apply = |x: &[f64], out: &mut [f64], tmp: &mut [f64]| {
            let mut xf = x.to_vec();
            xf[0] = 0.0;
            self.rows.apply(&xf, tmp);
            for k in 0..n {
                out[k] = self.diag[k] * xf[k];
            }
            self.rows.apply_t_add(tmp, self.rho, out);
            out[0] = 0.0;
        };
        let mut x = y.to_vec();
        x[0] = 0.0;
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax, &mut tmp);
        let mut r: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { rhs[k] - ax[k] }).collect();
        let rhs_norm = rhs[1..].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let mut z: Vec<f64> = r.iter().zip(&pre).map(|(a, b)| a / b).collect();
        let mut d = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..1000 {
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= 1e-13 * rhs_norm {
                break;
            }
            apply(&d, &mut ax, &mut tmp);
            let step = rz / d.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>();
            for k in 1..n {
                x[k] += step * d[k];
                r[k] -= step * ax[k];
            }
            for k in 1..n {
                z[k] = r[k] / pre[k];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 1..n {
                d[k] = z[k] + beta * d[k];
            }
        }
        y[1..].copy_from_slice(&x[1..]);
    }

    fn hankel_matrix(&self, y: &[f64]) -> Mat<f64> {
        let n = self.sdp.side;
        let mut m = Mat::<f64>::zeros(n, n);
        let mut k = 0;
        for a in 0..n {
            for b in a..n {
                let v = y[self.sdp.hankel[k] as usize];
                m[(a, b)] = v;
                m[(b, a)] = v;
                k += 1;
            }
        }
        m
    }

    /// Nearest point of the face cone to `w`.
    fn project_face(&self, w: &Mat<f64>) -> Result<Mat<f64>> {
        let n = self.sdp.side;
        let m = self.u.ncols();
        let mut t = Mat::<f64>::zeros(n, m);
        matmul(t.as_mut(), Accum::Replace, w.as_ref(), self.u.as_ref(), 1.0, self.par);
        let mut b = Mat::<f64>::zeros(m, m);
        matmul(b.as_mut(), Accum::Replace, self.u.transpose(), t.as_ref(), 1.0, self.par);
        // symmetrize against rounding before the eigensolver
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (b[(i, j)] + b[(j, i)]);
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
        let (vals, vecs) = sym_eig(b.as_ref(), self.par)?;
        let pos: Vec<usize> = (0..m).filter(|&i| vals[i] > 0.0).collect();
        let mut x = Mat::<f64>::zeros(n, n);
        if pos.is_empty() {
            return Ok(x);
        }
        let scaled = Mat::<f64>::from_fn(m, pos.len(), |i, j| vecs[(i, pos[j])] * vals[pos[j]].sqrt());
        let mut g = Mat::<f64>::zeros(n, pos.len());
        matmul(g.as_mut(), Accum::Replace, self.u.as_ref(), scaled.as_ref(), 1.0, self.par);
        matmul(x.as_mut(), Accum::Replace, g.as_ref(), g.transpose(), 1.0, self.par);
        Ok(x)
    }

    fn run(&mut self) -> Result<Solution> {
        let start = Instant::now();
        let sdp = self.sdp;
        let opts = self.opts;
        let n = sdp.side;
        let nm = sdp.num_moments();
        let p = self.rows.len();
        let blocks: Vec<usize> = sdp.localizing.iter().map(|b| b.side).collect();

        let mut y = vec![0.0; nm];
        y[0] = 1.0;
        let mut x = Mat::<f64>::zeros(n, n);
        let mut ud = Mat::<f64>::zeros(n, n);
        let mut loc_s: Vec<DMatrix<f64>> = blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        let mut loc_u = loc_s.clone();
        let mut exp_u = vec![0.0; self.explicit];

        let mut rhs = vec![0.0; nm];
        let mut target = vec![0.0; p];
        let mut by = vec![0.0; p];
        let mut trace = Vec::new();
        let alpha = opts.relaxation;
        let mut objective = f64::INFINITY;
        let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

        for iter in 1..=opts.max_iter {
            // y-update
            rhs.iter_mut().for_each(|v| *v = 0.0);
            let mut k = 0;
            for a in 0..n {
                for b in a..n {
                    let v = x[(a, b)] - ud[(a, b)];
                    rhs[sdp.hankel[k] as usize] += if a == b { v } else { 2.0 * v };
                    k += 1;
                }
            }
            rhs.iter_mut().for_each(|v| *v *= self.rho);
            for r in 0..self.explicit {
                target[r] = -exp_u[r] - self.rows.col0[r];
            }
            for (r, &(bi, a, b)) in self.loc_rows.iter().enumerate() {
                let w = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
                let r = r + self.explicit;
                target[r] = w * (loc_s[bi][(a, b)] - loc_u[bi][(a, b)]) - self.rows.col0[r];
            }
            self.rows.apply_t_add(&target, self.rho, &mut rhs);
            self.solve_normal(&rhs, &mut y);

            // moment-matrix block
            let h = self.hankel_matrix(&y);
            let mut relaxed = h.clone();
            scale_mat(&mut relaxed, alpha);
            let mut old = x.clone();
            scale_mat(&mut old, 1.0 - alpha);
            relaxed += &old;
            let mut w = relaxed.clone();
            w += &ud;
            let x_new = self.project_face(&w)?;
            let mut diff = relaxed;
            diff -= &x_new;
            ud += &diff;
            let mut gap = h.clone();
            gap -= &x_new;
            let mut primal2 = gap.squared_norm_l2();
            let mut step = x_new.clone();
            step -= &x;
            let mut dual2 = step.squared_norm_l2();
            x = x_new;

            // localizing and explicit rows
            self.rows.apply(&y, &mut by);
            for r in 0..self.explicit {
                let res = by[r] + self.rows.col0[r];
                exp_u[r] += alpha * res;
                primal2 += res * res;
            }
            let mut lmat: Vec<DMatrix<f64>> = blocks.iter().map(|&s| DMatrix::zeros(s, s)).collect();
            for (r, &(bi, a, b)) in self.loc_rows.iter().enumerate() {
                let r = r + self.explicit;
                let w = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
                let v = (by[r] + self.rows.col0[r]) / w;
                lmat[bi][(a, b)] = v;
                lmat[bi][(b, a)] = v;
            }
            for bi in 0..blocks.len() {
                let relaxed = &lmat[bi] * alpha + &loc_s[bi] * (1.0 - alpha);
                let s_new = psd_part(&(&relaxed + &loc_u[bi]));
                primal2 += (&lmat[bi] - &s_new).norm_squared();
                dual2 += (&s_new - &loc_s[bi]).norm_squared();
                loc_u[bi] += relaxed - &s_new;
                loc_s[bi] = s_new;
            }
            primal = primal2.sqrt();
            dual = self.rho * dual2.sqrt();
            let obj: f64 = sdp.objective.iter().map(|&i| y[i as usize] * y[i as usize]).sum();
            let obj_change = (obj - objective).abs();
            objective = obj;

            if primal <= opts.primal_tol && dual <= opts.dual_tol && obj_change <= opts.objective_tol {
                let pd = PseudoDistribution::new(sdp.layout, sdp.index.clone(), sdp.degree, y)?;
                return Ok(Solution {
                    pd,
                    stats: SolveStats {
                        iterations: iter,
                        primal_residual: primal,
                        dual_residual: dual,
                        objective,
                        rho: self.rho,
                        seconds: start.elapsed().as_secs_f64(),
                        face_dim: self.u.ncols(),
                        residual_trace: trace,
                    },
                });
            }
            if let Some(budget) = opts.time_budget {
                if start.elapsed() > budget {
                    return Err(Error::Timeout {
                        seconds: budget.as_secs_f64(),
                    });
                }
            }
            if iter % opts.adapt_every == 0 {
                trace.push(primal);
                if iter >= opts.infeasible_after {
                    let window = (1000 / opts.adapt_every).max(1);
                    if trace.len() > window {
                        let (old, recent) = trace.split_at(trace.len() - window);
                        let recent_min = recent.iter().copied().fold(f64::INFINITY, f64::min);
                        let old_min = old.iter().copied().fold(f64::INFINITY, f64::min);
                        if recent_min > opts.plateau_level && recent_min >= 0.99 * old_min {
                            return Err(Error::InfeasibleSdp {
                                residual: recent_min,
                                trace,
                            });
                        }
                    }
                }
                let scale = if !opts.adaptive_rho {
                    1.0
                } else if primal > 10.0 * dual {
                    2.0
                } else if dual > 10.0 * primal {
                    0.5
                } else {
                    1.0
                };
                if scale != 1.0 {
                    self.rho *= scale;
                    scale_mat(&mut ud, 1.0 / scale);
                    for u in &mut loc_u {
                        *u /= scale;
                    }
                    exp_u.iter_mut().for_each(|v| *v /= scale);
                    self.factor()?;
                }
            }
        }
        let _ = dual;
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            primal,
            trace,
        })
    }
}

fn row_norm(terms: &[(u32, f64)]) -> f64 {
    let n = terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

fn scale_mat(m: &mut Mat<f64>, s: f64) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= s;
        }
    }
}

/// Projection of a symmetric matrix onto the PSD cone.
fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 1 {
        return m.map(|v| v.max(0.0));
    }
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Pseudo-distribution satisfying the SDP that minimizes `Σ_i Ẽ[w_i]²`.
pub fn solve_min_norm(sdp: &SdpInstance, opts: &SolverOptions) -> Result<Solution> {
    Admm::new(sdp, opts)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{generate, DistTag, InstanceConfig, OutlierStrategy};
    use crate::sos::constraints::{build_constraints, ConstraintOptions};
    use crate::sos::pseudo::validate;
    use crate::sos::sdp::assemble_sdp;

    fn tiny(alpha: f64, seed: u64) -> crate::sample::LabeledSample {
        generate(&InstanceConfig {
            d: 2,
            r: 1,
            n: 4,
            alpha,
            dist_tag: DistTag::Gaussian,
            strategy: OutlierStrategy::DenseNoise,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn all_inliers_force_unit_weights() {
        let s = tiny(1.0, 1);
        let cs = build_constraints(&s, &ConstraintOptions::bare(4)).unwrap();
        let sdp = assemble_sdp(&cs, 4).unwrap();
        let sol = solve_min_norm(&sdp, &SolverOptions::default()).unwrap();
        for w in sol.pd.w_means() {
            assert!((w - 1.0).abs() <= 1e-5, "{w}");
        }
        let rep = validate(&sol.pd, &cs).unwrap();
        assert!(rep.passes(1e-5, 1e-6), "{rep:?}");
    }

    #[test]
    fn deterministic_and_policy_independent() {
        let s = tiny(0.5, 2);
        let cs = build_constraints(&s, &ConstraintOptions::desk()).unwrap();
        let sdp = assemble_sdp(&cs, 4).unwrap();
        let a = solve_min_norm(&sdp, &SolverOptions::default()).unwrap();
        let b = solve_min_norm(&sdp, &SolverOptions::default()).unwrap();
        assert_eq!(a.pd.moments(), b.pd.moments());
        let seq = SolverOptions {
            exec: Execution::Sequential,
            ..SolverOptions::default()
        };
        let c = solve_min_norm(&sdp, &seq).unwrap();
        let gap = a
            .pd
            .moments()
            .iter()
            .zip(c.pd.moments())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "{gap}");
    }

    #[test]
    fn contradictory_rows_are_reported() {
        let s = tiny(0.5, 3);
        let mut cs = build_constraints(&s, &ConstraintOptions::bare(4)).unwrap();
        // Σ w_i = n + 1 contradicts w_i ∈ {0, 1}
        cs.equalities[0].poly = &cs.equalities[0].poly
            - &crate::poly::MultiPoly::constant(&cs.vars, 3.0);
        let sdp = assemble_sdp(&cs, 4).unwrap();
        let opts = SolverOptions {
            max_iter: 20_000,
            ..SolverOptions::default()
        };
        match solve_min_norm(&sdp, &opts) {
            Err(Error::InfeasibleSdp { residual, .. }) => assert!(residual > 1e-3),
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}
