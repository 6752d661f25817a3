use super::lanczos::dense_hermitian_eigen;
use crate::error::{Error, Result};
use crate::spin::SpinConfig;
use crate::symmetry::{SectorBasis, SymmetryGroup};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::cmp::Ordering;

pub const MAX_DENSE_SITES: usize = 24;

/// A state in the full `2^N` configuration space, indexed by the configuration word.
#[derive(Clone, Debug)]
pub struct FullState {
    pub n_sites: usize,
    pub amplitudes: Vec<Complex64>,
}

impl FullState {
    pub fn amplitude(&self, a: SpinConfig) -> Complex64 {
        self.amplitudes[a.0 as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Expands sector coefficients `psi(r)` over the orbits of their representatives:
/// configuration `g r` receives `psi(r) conj(chi(g)) / sqrt(N_r)` from every `g`.
pub fn reconstruct_full_state(
    group: &SymmetryGroup,
    basis: &SectorBasis,
    coeffs: &[Complex64],
) -> Result<FullState> {
    let n = group.n_sites();
    if n > MAX_DENSE_SITES {
        return Err(Error::TooLarge {
            sites: n,
            limit: MAX_DENSE_SITES,
        });
    }
    if coeffs.len() != basis.len() {
        return Err(Error::InvalidDimensions(format!(
            "{} coefficients for a basis of {}",
            coeffs.len(),
            basis.len()
        )));
    }
    let mut amps = vec![Complex64::default(); 1usize << n];
    for (s, &c) in basis.states.iter().zip(coeffs) {
        let scale = c / s.norm_sq.sqrt();
        for g in 0..group.order() {
            let b = group.apply(g, s.config);
            amps[b.0 as usize] += scale * group.character(g).conj();
        }
    }
    Ok(FullState {
        n_sites: n,
        amplitudes: amps,
    })
}

/// Reduced density matrix of a block; local index bit `k` is the spin on `sites[k]`.
#[derive(Clone, Debug)]
pub struct BlockRdm {
    pub sites: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
}

impl BlockRdm {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Eigenvalues, descending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = dense_hermitian_eigen(self.matrix.clone())
            .into_iter()
            .map(|p| p.0)
            .collect();
        ev.reverse();
        ev
    }
}

/// `rho_b = Tr_{outside b} |psi><psi|`, normalized to unit trace.
pub fn block_rdm(state: &FullState, sites: &[usize]) -> Result<BlockRdm> {
    let n = state.n_sites;
    if sites.iter().any(|&s| s >= n) || sites.is_empty() {
        return Err(Error::InvalidDimensions(format!(
            "block {sites:?} outside {n}-site lattice"
        )));
    }
    let env: Vec<usize> = (0..n).filter(|s| !sites.contains(s)).collect();
    let (dim_b, dim_e) = (1usize << sites.len(), 1usize << env.len());
    let mut psi = DMatrix::<Complex64>::zeros(dim_b, dim_e);
    for (idx, &amp) in state.amplitudes.iter().enumerate() {
        if amp != Complex64::default() {
            let a = SpinConfig(idx as u64);
            psi[(a.gather(sites), a.gather(&env))] = amp;
        }
    }
    let mut rho = &psi * psi.adjoint();
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::InvalidDimensions("zero state".into()));
    }
    rho.unscale_mut(tr);
    Ok(BlockRdm {
        sites: sites.to_vec(),
        matrix: rho,
    })
}

/// A `chi x 2^b` map with orthonormal rows onto the retained block states.
#[derive(Clone, Debug, PartialEq)]
pub struct Isometry {
    pub matrix: DMatrix<Complex64>,
    /// RDM eigenvalues in descending order, when the isometry came from an RDM.
    pub weights: Vec<f64>,
}

impl Isometry {
    pub fn chi(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn block_size(&self) -> usize {
        self.block_dim().trailing_zeros() as usize
    }

    /// Wraps a matrix, checking that its rows are orthonormal to 1e-10.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        let iso = Isometry {
            matrix,
            weights: Vec::new(),
        };
        if !iso.block_dim().is_power_of_two() || iso.chi() == 0 || iso.chi() > iso.block_dim() {
            return Err(Error::InvalidDimensions(format!(
                "isometry shape {}x{}",
                iso.chi(),
                iso.block_dim()
            )));
        }
        let defect = iso.orthonormality_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidDimensions(format!(
                "isometry rows not orthonormal (defect {defect:.2e})"
            )));
        }
        Ok(iso)
    }

    pub fn identity(block_size: usize) -> Self {
        let d = 1usize << block_size;
        Isometry {
            matrix: DMatrix::identity(d, d),
            weights: Vec::new(),
        }
    }

    /// Rows from Gram-Schmidt on complex Gaussian vectors.
    pub fn random<R: Rng + ?Sized>(chi: usize, block_size: usize, rng: &mut R) -> Self {
        let d = 1usize << block_size;
        assert!(chi >= 1 && chi <= d);
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(chi);
        while rows.len() < chi {
            let mut v: Vec<Complex64> = (0..d)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            for _ in 0..2 {
                for r in &rows {
                    let c: Complex64 = r.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    v.iter_mut().zip(r).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                rows.push(v.into_iter().map(|x| x / nrm).collect());
            }
        }
        Isometry {
            matrix: DMatrix::from_fn(chi, d, |i, j| rows[i][j]),
            weights: Vec::new(),
        }
    }

    /// Largest entry of `|C C^dagger - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = &self.matrix * self.matrix.adjoint();
        let id = DMatrix::<Complex64>::identity(self.chi(), self.chi());
        (g - id).iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    pub fn retained_weight(&self) -> f64 {
        self.weights.iter().take(self.chi()).sum()
    }
}

fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, x) in v.iter().enumerate() {
        // first index wins among near-equal magnitudes
        if x.norm() > best_mag + 1e-12 {
            best_mag = x.norm();
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / v[best].norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
}

fn lexicographic(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Rows are the `chi` eigenvectors of largest eigenvalue. Each eigenvector is
/// phase-fixed so its largest-magnitude entry is real positive; eigenvalues within
/// 1e-12 of each other are ordered by the fixed vectors' lexicographic order.
pub fn isometry_from_rdm(rdm: &BlockRdm, chi: usize) -> Result<Isometry> {
    let d = rdm.matrix.nrows();
    if chi == 0 || chi > d {
        return Err(Error::InvalidDimensions(format!(
            "chi = {chi} outside 1..={d}"
        )));
    }
    let mut pairs = dense_hermitian_eigen(rdm.matrix.clone());
    for p in pairs.iter_mut() {
        fix_phase(&mut p.1);
    }
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-12 {
            lexicographic(&b.1, &a.1)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    if chi < d && (pairs[chi - 1].0 - pairs[chi].0).abs() <= 1e-10 {
        log::warn!(
            "chi = {chi} splits a degenerate RDM level at {:.6e}",
            pairs[chi].0
        );
    }
    let matrix = DMatrix::from_fn(chi, d, |i, j| pairs[i].1[j]);
    Ok(Isometry {
        matrix,
        weights: pairs.iter().map(|p| p.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn product_state(n: usize, a: u64) -> FullState {
        let mut amps = vec![Complex64::default(); 1 << n];
        amps[a as usize] = Complex64::new(1.0, 0.0);
        FullState {
            n_sites: n,
            amplitudes: amps,
        }
    }

    #[test]
    fn product_state_rdm_rank_one() {
        let st = product_state(4, 0b0110);
        let rdm = block_rdm(&st, &[0, 1]).unwrap();
        let spec = rdm.spectrum();
        assert!((spec[0] - 1.0).abs() < 1e-14);
        assert!(spec[1..].iter().all(|x| x.abs() < 1e-14));
        assert_eq!(rdm.matrix[(0b10, 0b10)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn singlet_is_maximally_mixed() {
        let mut amps = vec![Complex64::default(); 4];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amps[0b01] = Complex64::new(h, 0.0);
        amps[0b10] = Complex64::new(-h, 0.0);
        let st = FullState {
            n_sites: 2,
            amplitudes: amps,
        };
        let spec = block_rdm(&st, &[0]).unwrap().spectrum();
        assert!((spec[0] - 0.5).abs() < 1e-14 && (spec[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn full_rank_isometry_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut amps: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let nrm = amps.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|x| *x /= nrm);
        let st = FullState {
            n_sites: 6,
            amplitudes: amps,
        };
        let rdm = block_rdm(&st, &[0, 1, 2]).unwrap();
        assert!((rdm.trace() - 1.0).abs() < 1e-12);
        let iso = isometry_from_rdm(&rdm, 8).unwrap();
        let c = &iso.matrix;
        let id = DMatrix::<Complex64>::identity(8, 8);
        assert!((c * c.adjoint() - &id).iter().all(|x| x.norm() < 1e-12));
        assert!((c.adjoint() * c - &id).iter().all(|x| x.norm() < 1e-12));
        // retained weight grows with chi
        let mut last = 0.0;
        for chi in 1..=8 {
            let w = isometry_from_rdm(&rdm, chi).unwrap().retained_weight();
            assert!(w >= last - 1e-15);
            last = w;
        }
        assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_isometry_is_the_state() {
        let st = product_state(4, 0b0110);
        let rdm = block_rdm(&st, &[0, 1]).unwrap();
        let iso = isometry_from_rdm(&rdm, 1).unwrap();
        assert_eq!(iso.chi(), 1);
        for j in 0..4 {
            let want = if j == 0b10 { 1.0 } else { 0.0 };
            assert!((iso.matrix[(0, j)] - Complex64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn random_isometry_rows_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let iso = Isometry::random(5, 4, &mut rng);
        assert!(iso.orthonormality_defect() < 1e-12);
        assert!(Isometry::from_matrix(iso.matrix.clone()).is_ok());
        assert!(Isometry::from_matrix(iso.matrix.scale(2.0)).is_err());
    }
}
