//! Truncated moment-matrix SDP for a constraint system.
//!
//! The decision vector holds one pseudo-moment per monomial of degree `<= ℓ`,
//! indexed by [`MonomialIndex`]. Index 0 is the constant monomial.

use std::io::Write;
use std::sync::Arc;

use super::constraints::{ConstraintSystem, VarLayout};
use super::monomials::{count_up_to, MonomialIndex};
use crate::error::{Error, Result};
use crate::poly::{MultiPoly, Variables};

/// Largest moment-matrix side accepted by [`assemble_sdp`].
pub const MAX_SIDE: usize = 5000;

/// Sparse linear form over moments.
pub type SparseRow = Vec<(u32, f64)>;

/// `Ẽ[g · m] = 0` for equality row `source` and multiplier monomial `multiplier`.
#[derive(Clone, Debug)]
pub struct EqualityRow {
    pub source: usize,
    pub multiplier: usize,
    pub terms: SparseRow,
    /// Implied by the moment-matrix face (`deg g <= ℓ/2`).
    pub implied: bool,
}

/// Localizing matrix of `h ≥ 0`, packed upper-triangular, entry `(a, b)` is
/// `Ẽ[h · m_a · m_b]`.
#[derive(Clone, Debug)]
pub struct LocalizingBlock {
    pub name: String,
    pub side: usize,
    pub entries: Vec<SparseRow>,
}

#[derive(Clone, Debug)]
pub struct SdpInstance {
    pub degree: usize,
    pub layout: VarLayout,
    pub vars: Variables,
    pub index: Arc<MonomialIndex>,
    /// Moment-matrix side: number of monomials of degree `<= ℓ/2`.
    pub side: usize,
    /// Packed upper-triangular moment-matrix entries → moment index.
    pub hankel: Vec<u32>,
    pub equality_names: Vec<String>,
    pub equalities: Vec<EqualityRow>,
    /// Vectors `g · m` in basis coordinates for `deg g + deg m <= ℓ/2`. Every
    /// feasible moment matrix annihilates them.
    pub face: Vec<SparseRow>,
    pub localizing: Vec<LocalizingBlock>,
    /// Moment indices of `w_1..w_n`; the objective is `Σ Ẽ[w_i]²`.
    pub objective: Vec<u32>,
}

impl SdpInstance {
    pub fn num_moments(&self) -> usize {
        self.index.len()
    }

    /// Rows that the face does not already enforce.
    pub fn explicit_equalities(&self) -> impl Iterator<Item = &EqualityRow> {
        self.equalities.iter().filter(|r| !r.implied)
    }
}

fn packed_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Moment index of every term of `p · m`.
fn shifted_terms(index: &MonomialIndex, p: &MultiPoly, m: usize) -> SparseRow {
    let mono = index.monomial(m);
    let mut row: SparseRow = p
        .terms()
        .map(|(t, c)| {
            let k = index
                .get(&t.mul(mono))
                .expect("product degree within the index");
            (k as u32, c)
        })
        .collect();
    row.sort_by_key(|e| e.0);
    row
}

pub fn assemble_sdp(cs: &ConstraintSystem, degree: usize) -> Result<SdpInstance> {
    if degree == 0 || degree % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "relaxation degree must be even and positive, got {degree}"
        )));
    }
    cs.check_degree(degree)?;
    let nvars = cs.layout.nvars();
    let half = degree / 2;
    let side = count_up_to(nvars, half);
    if side > MAX_SIDE {
        return Err(Error::BasisOverflow {
            side,
            limit: MAX_SIDE,
        });
    }
    let index = Arc::new(MonomialIndex::new(nvars, degree));

    let mut hankel = Vec::with_capacity(packed_len(side));
    for a in 0..side {
        for b in a..side {
            hankel.push(index.product(a, b).expect("basis products fit") as u32);
        }
    }

    let mut equalities = Vec::new();
    let mut face = Vec::new();
    for (source, row) in cs.equalities.iter().enumerate() {
        let dg = row.poly.degree();
        let implied = dg <= half;
        for m in 0..index.len_up_to(degree - dg) {
            let terms = shifted_terms(&index, &row.poly, m);
            if implied && m < index.len_up_to(half - dg) {
                face.push(terms.clone());
            }
            equalities.push(EqualityRow {
                source,
                multiplier: m,
                terms,
                implied,
            });
        }
    }

    let mut localizing = Vec::new();
    for row in &cs.inequalities {
        let lh = (degree - row.poly.degree()) / 2;
        let bside = index.len_up_to(lh);
        let mut entries = Vec::with_capacity(packed_len(bside));
        for a in 0..bside {
            for b in a..bside {
                let m = index.product(a, b).expect("localizing products fit");
                entries.push(shifted_terms(&index, &row.poly, m));
            }
        }
        localizing.push(LocalizingBlock {
            name: row.name.clone(),
            side: bside,
            entries,
        });
    }

    let objective = (0..cs.layout.n)
        .map(|i| {
            let m = crate::poly::Monomial::var(nvars, cs.layout.w(i));
            index.get(&m).expect("degree-one monomials are indexed") as u32
        })
        .collect();

    Ok(SdpInstance {
        degree,
        layout: cs.layout,
        vars: cs.vars.clone(),
        index,
        side,
        hankel,
        equality_names: cs.equalities.iter().map(|r| r.name.clone()).collect(),
        equalities,
        face,
        localizing,
        objective,
    })
}

/// Writes the instance as `row col block value` triplets, `col` being the
/// moment index. Header lines start with `#` and name the blocks.
///
/// Block 0 is the normalization `Ẽ[1] = 1`, block 1 the moment matrix (rows
/// are packed upper-triangular positions), block 2 the equality rows, block 3
/// the objective `Σ y_col²`, and blocks 4.. the localizing matrices.
pub fn write_triplets<W: Write>(sdp: &SdpInstance, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "# moments {} degree {} variables {}",
        sdp.num_moments(),
        sdp.degree,
        sdp.vars.join(",")
    )?;
    writeln!(out, "# block 0 normalization rows 1 rhs 1")?;
    writeln!(out, "# block 1 psd moment_matrix side {}", sdp.side)?;
    writeln!(out, "# block 2 zero equalities rows {}", sdp.equalities.len())?;
    writeln!(out, "# block 3 objective sum_of_squares rows {}", sdp.objective.len())?;
    for (k, b) in sdp.localizing.iter().enumerate() {
        writeln!(out, "# block {} psd localizing {} side {}", k + 4, b.name, b.side)?;
    }
    writeln!(out, "0 0 0 1")?;
    for (row, &col) in sdp.hankel.iter().enumerate() {
        writeln!(out, "{row} {col} 1 1")?;
    }
    for (row, eq) in sdp.equalities.iter().enumerate() {
        for &(col, v) in &eq.terms {
            writeln!(out, "{row} {col} 2 {v:e}")?;
        }
    }
    for (row, &col) in sdp.objective.iter().enumerate() {
        writeln!(out, "{row} {col} 3 1")?;
    }
    for (k, b) in sdp.localizing.iter().enumerate() {
        for (row, entry) in b.entries.iter().enumerate() {
            for &(col, v) in entry {
                writeln!(out, "{row} {col} {} {v:e}", k + 4)?;
            }
        }
    }
    Ok(())
}
