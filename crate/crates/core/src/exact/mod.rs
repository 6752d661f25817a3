//! Sector-resolved exact diagonalization and reduced-density-matrix isometries.

mod lanczos;
mod rdm;

pub use lanczos::{dense_hermitian_eigen, lanczos_lowest, LanczosOptions};
pub use rdm::{block_rdm, isometry_from_rdm, reconstruct_full_state, BlockRdm, FullState, Isometry, MAX_DENSE_SITES};

use crate::error::{Error, Result};
use crate::model::{HamiltonianTerm, Lattice};
use crate::spin::SpinConfig;
use crate::symmetry::{enumerate_sector_basis, SectorBasis, SectorSpec, SymmetryGroup};
use num_complex::Complex64;
use rayon::prelude::*;

/// Row `a` of the sector Hamiltonian: pairs `(b, <a_symm|H|b_symm>)` over connected
/// representatives `b`, sorted by `b` with repeated targets summed.
///
/// `S_i.S_j` contributes `±J/4` on the diagonal and, for anti-aligned spins, an
/// exchange `J/2` to the flipped configuration `c`. With `b = g* c` the representative
/// of `c`, the sector element is `(J/2) chi(g*) sqrt(N_b / N_a)`.
pub fn hamiltonian_connections(
    group: &SymmetryGroup,
    terms: &[HamiltonianTerm],
    a_repr: SpinConfig,
) -> Vec<(SpinConfig, Complex64)> {
    let norm_a = group.norm_squared(a_repr);
    connections_with_norm(group, terms, a_repr, norm_a)
}

pub(crate) fn connections_with_norm(
    group: &SymmetryGroup,
    terms: &[HamiltonianTerm],
    a: SpinConfig,
    norm_a: f64,
) -> Vec<(SpinConfig, Complex64)> {
    let mut diag = 0.0;
    let mut out: Vec<(SpinConfig, Complex64)> = Vec::with_capacity(terms.len() + 1);
    for t in terms {
        let aligned = a.is_down(t.i) == a.is_down(t.j);
        if aligned {
            diag += 0.25 * t.coupling;
        } else {
            diag -= 0.25 * t.coupling;
            let c = a.flip_pair(t.i, t.j);
            let (b, g, norm_b) = group.representative_with_norm(c);
            if norm_b == 0.0 {
                continue;
            }
            let amp = 0.5 * t.coupling * group.character(g) * (norm_b / norm_a).sqrt();
            out.push((b, amp));
        }
    }
    out.push((a, Complex64::new(diag, 0.0)));
    out.sort_by_key(|e| e.0);
    let mut merged: Vec<(SpinConfig, Complex64)> = Vec::with_capacity(out.len());
    for (b, v) in out {
        match merged.last_mut() {
            Some(last) if last.0 == b => last.1 += v,
            _ => merged.push((b, v)),
        }
    }
    merged
}

/// Sparse sector Hamiltonian in the basis of enumerated representatives.
#[derive(Clone, Debug)]
pub struct SectorMatrix {
    pub basis: SectorBasis,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl SectorMatrix {
    pub fn build(group: &SymmetryGroup, terms: &[HamiltonianTerm], basis: SectorBasis) -> Self {
        let rows = basis
            .states
            .par_iter()
            .map(|s| {
                connections_with_norm(group, terms, s.config, s.norm_sq)
                    .into_iter()
                    .map(|(b, v)| {
                        let j = basis
                            .index_of(b)
                            .expect("connected representative missing from sector basis");
                        (j, v)
                    })
                    .collect()
            })
            .collect();
        SectorMatrix { basis, rows }
    }

    /// Enumerates the basis and assembles the matrix.
    pub fn for_sector(
        group: &SymmetryGroup,
        terms: &[HamiltonianTerm],
        enumeration_limit: usize,
    ) -> Result<Self> {
        let basis = enumerate_sector_basis(group, enumeration_limit)?;
        Ok(Self::build(group, terms, basis))
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest `|H_ab - conj(H_ba)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        let mut worst: f64 = 0.0;
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                worst = worst.max((d[(i, j)] - d[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Lowest `n_eigs` eigenpairs, ascending.
    pub fn lowest_eigenpairs(
        &self,
        n_eigs: usize,
        opts: &LanczosOptions,
    ) -> Result<Vec<(f64, Vec<Complex64>)>> {
        if self.dim() == 0 {
            return Err(Error::InvalidDimensions("empty sector".into()));
        }
        lanczos_lowest(|x, y| self.matvec(x, y), self.dim(), n_eigs, opts)
    }
}

/// Lowest sector eigenpair of a reference system, with its full-space state.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub energy: f64,
    pub sector_dim: usize,
    pub state: FullState,
}

pub fn sector_ground_state(
    lattice: &Lattice,
    terms: &[HamiltonianTerm],
    sector: &SectorSpec,
    opts: &LanczosOptions,
) -> Result<ReferenceSolution> {
    let group = SymmetryGroup::new(lattice, sector)?;
    let h = SectorMatrix::for_sector(&group, terms, crate::symmetry::DEFAULT_ENUMERATION_LIMIT)?;
    let (energy, v) = h.lowest_eigenpairs(1, opts)?.remove(0);
    let state = reconstruct_full_state(&group, &h.basis, &v)?;
    Ok(ReferenceSolution {
        energy,
        sector_dim: h.dim(),
        state,
    })
}
