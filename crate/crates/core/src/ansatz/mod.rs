//! The hybrid wavefunction: an open MPS backbone whose physical legs are the
//! renormalized block states selected by fixed isometries.
//!
//! For a real-space configuration with block words `a_1 .. a_nb`,
//!
//! ```text
//! phi(a) = sum_{mu, gamma} B_1[gamma_1]_{mu_1} C[gamma_1, a_1] B_2[gamma_2]_{mu_1 mu_2} C[gamma_2, a_2] ...
//! ```
//!
//! The symmetric amplitude of a representative `r` has modulus
//! `sqrt(sum over the distinct orbit of r of |phi|^2)` and the phase of `phi(r)`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointManifest};

use crate::error::{Error, Result};
use crate::exact::Isometry;
use crate::model::Lattice;
use crate::spin::SpinConfig;
use crate::symmetry::{SectorSpec, SymmetryGroup};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `2 chi D + (n_b - 2) chi D^2` for `n_b = N / b >= 2`.
pub fn parameter_count(n_sites: usize, block_size: usize, chi: usize, bond_dim: usize) -> Result<usize> {
    if block_size == 0 || !n_sites.is_multiple_of(block_size) || n_sites / block_size < 2 {
        return Err(Error::InvalidDimensions(format!(
            "N = {n_sites}, b = {block_size} does not give at least two blocks"
        )));
    }
    if chi == 0 || bond_dim == 0 || chi > 1usize << block_size.min(63) {
        return Err(Error::InvalidDimensions(format!(
            "chi = {chi}, D = {bond_dim} invalid for b = {block_size}"
        )));
    }
    let nb = n_sites / block_size;
    Ok(2 * chi * bond_dim + (nb - 2) * chi * bond_dim * bond_dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzDims {
    pub n_sites: usize,
    pub block_size: usize,
    pub n_blocks: usize,
    pub chi: usize,
    pub bond_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IsometryMode {
    /// One isometry for every block.
    Shared(Isometry),
    PerBlock(Vec<Isometry>),
}

impl IsometryMode {
    pub fn for_block(&self, i: usize) -> &Isometry {
        match self {
            IsometryMode::Shared(c) => c,
            IsometryMode::PerBlock(cs) => &cs[i],
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, IsometryMode::Shared(_))
    }
}

/// `ln phi`, or `None` when the amplitude is exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogAmplitude(pub Option<Complex64>);

impl LogAmplitude {
    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }

    pub fn ln(&self) -> Option<Complex64> {
        self.0
    }

    /// `ln |phi|`, `-inf` for a zero amplitude.
    pub fn ln_modulus(&self) -> f64 {
        self.0.map_or(f64::NEG_INFINITY, |l| l.re)
    }

    pub fn value(&self) -> Complex64 {
        self.0.map_or(ZERO, |l| l.exp())
    }

    /// `self / other` as a plain complex number.
    pub fn ratio(&self, other: &LogAmplitude) -> Option<Complex64> {
        match (self.0, other.0) {
            (_, None) => None,
            (None, Some(_)) => Some(ZERO),
            (Some(a), Some(b)) => Some((a - b).exp()),
        }
    }
}

/// Holomorphic log-derivatives `d ln phi / d theta` at the sampled configuration
/// and at its representative. The hybrid log-amplitude
/// `ln phi~ = Re ln phi(a_real) + i Im ln phi(a_repr)` is not holomorphic, so its
/// derivatives are given along the real and imaginary directions of each parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDerivatives {
    pub at_real: Vec<Complex64>,
    pub at_repr: Vec<Complex64>,
}

impl LogDerivatives {
    /// `d ln phi~ / d Re(theta_j)`.
    pub fn d_re(&self, j: usize) -> Complex64 {
        Complex64::new(self.at_real[j].re, self.at_repr[j].im)
    }

    /// `d ln phi~ / d Im(theta_j)`.
    pub fn d_im(&self, j: usize) -> Complex64 {
        Complex64::new(-self.at_real[j].im, self.at_repr[j].re)
    }
}

/// Row-major tensor `B[gamma][left][right]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTensor {
    pub chi: usize,
    pub left: usize,
    pub right: usize,
    pub data: Vec<Complex64>,
}

impl BlockTensor {
    pub fn zeros(chi: usize, left: usize, right: usize) -> Self {
        BlockTensor {
            chi,
            left,
            right,
            data: vec![ZERO; chi * left * right],
        }
    }

    #[inline]
    pub fn index(&self, gamma: usize, l: usize, r: usize) -> usize {
        (gamma * self.left + l) * self.right + r
    }

    #[inline]
    pub fn get(&self, gamma: usize, l: usize, r: usize) -> Complex64 {
        self.data[self.index(gamma, l, r)]
    }
}

/// Left-to-right environment vectors for one configuration, stored normalized with
/// separate log scales.
#[derive(Clone, Debug)]
pub struct Environments {
    left: Vec<(Vec<Complex64>, f64)>,
    right: Vec<(Vec<Complex64>, f64)>,
    ln_phi: Option<Complex64>,
}

impl Environments {
    /// Product of the block matrices strictly left of block `i`.
    pub fn left(&self, i: usize) -> Vec<Complex64> {
        let (v, s) = &self.left[i];
        v.iter().map(|x| x * s.exp()).collect()
    }

    /// Product of the block matrices strictly right of block `i`.
    pub fn right(&self, i: usize) -> Vec<Complex64> {
        let (v, s) = &self.right[i];
        v.iter().map(|x| x * s.exp()).collect()
    }

    pub fn ln_phi(&self) -> LogAmplitude {
        LogAmplitude(self.ln_phi)
    }
}

fn normalize(v: &mut [Complex64]) -> Option<f64> {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    if m == 0.0 || !m.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= m);
    Some(m.ln())
}

#[derive(Clone, Debug)]
pub struct HybridState {
    lattice: Lattice,
    sector: SectorSpec,
    isometries: IsometryMode,
    tensors: Vec<BlockTensor>,
    dims: AnsatzDims,
    // projected[i][idx] is the left x right matrix sum_gamma C[gamma, idx] B_i[gamma]
    projected: Vec<Vec<Complex64>>,
    contiguous: bool,
}

impl HybridState {
    pub fn new(
        lattice: Lattice,
        sector: SectorSpec,
        isometries: IsometryMode,
        bond_dim: usize,
        tensors: Vec<BlockTensor>,
    ) -> Result<Self> {
        let n = lattice.n_sites();
        let b = lattice.block_size();
        let nb = lattice.n_blocks();
        let chi = isometries.for_block(0).chi();
        if let IsometryMode::PerBlock(cs) = &isometries {
            if cs.len() != nb || cs.iter().any(|c| c.chi() != chi) {
                return Err(Error::InvalidDimensions(
                    "per-block isometries must be one per block with a common chi".into(),
                ));
            }
        }
        for i in 0..nb {
            let c = isometries.for_block(i);
            if c.block_dim() != 1usize << b {
                return Err(Error::InvalidDimensions(format!(
                    "isometry acts on {} states, blocks have {}",
                    c.block_dim(),
                    1usize << b
                )));
            }
        }
        let expected = parameter_count(n, b, chi, bond_dim)?;
        if tensors.len() != nb {
            return Err(Error::InvalidDimensions(format!(
                "{} tensors for {nb} blocks",
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            let (l, r) = Self::bond_shape(i, nb, bond_dim);
            if t.chi != chi || t.left != l || t.right != r || t.data.len() != chi * l * r {
                return Err(Error::InvalidDimensions(format!(
                    "block {i} tensor is {}x{}x{}, expected {chi}x{l}x{r}",
                    t.chi, t.left, t.right
                )));
            }
            if t.data.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::InvalidDimensions(format!("block {i} has non-finite entries")));
            }
        }
        let actual: usize = tensors.iter().map(|t| t.data.len()).sum();
        assert_eq!(actual, expected, "parameter count disagrees with the closed form");

        let contiguous = lattice
            .blocks
            .iter()
            .enumerate()
            .all(|(i, s)| s.iter().enumerate().all(|(k, &site)| site == i * b + k));
        let mut state = HybridState {
            dims: AnsatzDims {
                n_sites: n,
                block_size: b,
                n_blocks: nb,
                chi,
                bond_dim,
            },
            lattice,
            sector,
            isometries,
            tensors,
            projected: Vec::new(),
            contiguous,
        };
        state.refresh();
        let norm = crate::sampler::Environment::new(&state).norm_sqr();
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::InvalidDimensions("state is identically zero".into()));
        }
        Ok(state)
    }

    /// Tensors with entries drawn from a complex Gaussian of scale `1/sqrt(D)`.
    pub fn random<R: Rng + ?Sized>(
        lattice: Lattice,
        sector: SectorSpec,
        isometries: IsometryMode,
        bond_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let nb = lattice.n_blocks();
        let chi = isometries.for_block(0).chi();
        let sigma = (0.5 / bond_dim as f64).sqrt();
        let tensors = (0..nb)
            .map(|i| {
                let (l, r) = Self::bond_shape(i, nb, bond_dim);
                let mut t = BlockTensor::zeros(chi, l, r);
                for x in t.data.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *x = Complex64::new(sigma * re, sigma * im);
                }
                t
            })
            .collect();
        Self::new(lattice, sector, isometries, bond_dim, tensors)
    }

    fn bond_shape(i: usize, nb: usize, d: usize) -> (usize, usize) {
        let l = if i == 0 { 1 } else { d };
        let r = if i + 1 == nb { 1 } else { d };
        (l, r)
    }

    fn refresh(&mut self) {
        let dim = 1usize << self.dims.block_size;
        self.projected = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let c = &self.isometries.for_block(i).matrix;
                let lr = t.left * t.right;
                let mut out = vec![ZERO; dim * lr];
                for idx in 0..dim {
                    let dst = &mut out[idx * lr..(idx + 1) * lr];
                    for g in 0..t.chi {
                        let w = c[(g, idx)];
                        if w == ZERO {
                            continue;
                        }
                        let src = &t.data[g * lr..(g + 1) * lr];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
                out
            })
            .collect();
    }

    pub fn dims(&self) -> AnsatzDims {
        self.dims
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sector(&self) -> &SectorSpec {
        &self.sector
    }

    pub fn isometries(&self) -> &IsometryMode {
        &self.isometries
    }

    pub fn isometry(&self, block: usize) -> &Isometry {
        self.isometries.for_block(block)
    }

    pub fn tensors(&self) -> &[BlockTensor] {
        &self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// All tensor entries, block by block in `[gamma][left][right]` order.
    pub fn parameters(&self) -> Vec<Complex64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_parameters(&mut self, params: &[Complex64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::InvalidDimensions(format!(
                "{} parameters for a state with {}",
                params.len(),
                self.parameter_count()
            )));
        }
        if params.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidDimensions("non-finite parameters".into()));
        }
        let mut off = 0;
        for t in self.tensors.iter_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&params[off..off + n]);
            off += n;
        }
        self.refresh();
        Ok(())
    }

    pub fn with_parameters(&self, params: &[Complex64]) -> Result<Self> {
        let mut s = self.clone();
        s.set_parameters(params)?;
        Ok(s)
    }

    /// Same tensors and isometries, tagged with another sector.
    pub fn with_sector(&self, sector: SectorSpec) -> Self {
        let mut s = self.clone();
        s.sector = sector;
        s
    }

    /// Embeds the tensors into a larger bond dimension: old entries are kept, new
    /// entries are complex Gaussian noise of scale `noise`.
    pub fn grow_bond_dimension<R: Rng + ?Sized>(
        &self,
        new_d: usize,
        noise: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = self.dims.bond_dim;
        if new_d < d {
            return Err(Error::InvalidDimensions(format!(
                "cannot shrink bond dimension {d} to {new_d}"
            )));
        }
        let nb = self.dims.n_blocks;
        let tensors = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (l, r) = Self::bond_shape(i, nb, new_d);
                let mut nt = BlockTensor::zeros(t.chi, l, r);
                for g in 0..t.chi {
                    for a in 0..l {
                        for b in 0..r {
                            let k = nt.index(g, a, b);
                            nt.data[k] = if a < t.left && b < t.right {
                                t.get(g, a, b)
                            } else {
                                let re: f64 = rng.sample(StandardNormal);
                                let im: f64 = rng.sample(StandardNormal);
                                Complex64::new(noise * re, noise * im)
                            };
                        }
                    }
                }
                nt
            })
            .collect();
        Self::new(
            self.lattice.clone(),
            self.sector.clone(),
            self.isometries.clone(),
            new_d,
            tensors,
        )
    }

    #[inline]
    pub fn block_word(&self, a: SpinConfig, block: usize) -> usize {
        if self.contiguous {
            let b = self.dims.block_size;
            ((a.0 >> (block * b)) & ((1u64 << b) - 1)) as usize
        } else {
            a.gather(&self.lattice.blocks[block])
        }
    }

    /// The `left x right` matrix `sum_gamma C[gamma, word] B_block[gamma]`.
    #[inline]
    pub fn block_matrix(&self, block: usize, word: usize) -> &[Complex64] {
        let t = &self.tensors[block];
        let lr = t.left * t.right;
        &self.projected[block][word * lr..(word + 1) * lr]
    }

    /// `ln phi(a)` by a left-to-right sweep with rescaling.
    pub fn amplitude_real(&self, a: SpinConfig) -> LogAmplitude {
        let nb = self.dims.n_blocks;
        let mut v: Vec<Complex64> = self.block_matrix(0, self.block_word(a, 0)).to_vec();
        let mut scale = 0.0;
        let mut next = vec![ZERO; self.dims.bond_dim];
        for i in 1..nb {
            let t = &self.tensors[i];
            let m = self.block_matrix(i, self.block_word(a, i));
            let out = &mut next[..t.right];
            out.fill(ZERO);
            for (l, &vl) in v.iter().enumerate() {
                if vl == ZERO {
                    continue;
                }
                let row = &m[l * t.right..(l + 1) * t.right];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += vl * x;
                }
            }
            v.clear();
            v.extend_from_slice(out);
            match normalize(&mut v) {
                Some(s) => scale += s,
                None => return LogAmplitude(None),
            }
        }
        let s = v[0];
        if s == ZERO {
            LogAmplitude(None)
        } else {
            LogAmplitude(Some(Complex64::new(scale + s.norm().ln(), s.arg())))
        }
    }

    /// `phi(a)` as a plain complex number.
    pub fn amplitude_value(&self, a: SpinConfig) -> Complex64 {
        self.amplitude_real(a).value()
    }

    /// Symmetric amplitude of a representative: `ln psi = ln sqrt(sum_orbit |phi|^2) + i arg phi(r)`.
    pub fn amplitude_symm(&self, group: &SymmetryGroup, a_repr: SpinConfig) -> Result<LogAmplitude> {
        if group.norm_squared(a_repr) == 0.0 {
            return Err(Error::ZeroNorm { config: a_repr.0 });
        }
        Ok(self.amplitude_symm_unchecked(group, a_repr))
    }

    /// As [`amplitude_symm`](Self::amplitude_symm) without the sector-norm check. If
    /// `phi(r)` vanishes while other orbit members do not, the phase is taken as 0.
    pub fn amplitude_symm_unchecked(&self, group: &SymmetryGroup, a_repr: SpinConfig) -> LogAmplitude {
        let orbit = if group.is_trivial() {
            vec![(a_repr, 0)]
        } else {
            group.orbit(a_repr)
        };
        let mut logs: Vec<f64> = Vec::with_capacity(orbit.len());
        let mut phase = 0.0;
        for &(c, _) in &orbit {
            let l = self.amplitude_real(c);
            if c == a_repr {
                if let Some(z) = l.0 {
                    phase = z.im;
                }
            }
            if let Some(z) = l.0 {
                logs.push(2.0 * z.re);
            }
        }
        if logs.is_empty() {
            return LogAmplitude(None);
        }
        let m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + logs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        LogAmplitude(Some(Complex64::new(0.5 * lse, phase)))
    }

    /// Left and right environment vectors of `a`, each stored normalized.
    pub fn environments(&self, a: SpinConfig) -> Environments {
        let nb = self.dims.n_blocks;
        let words: Vec<usize> = (0..nb).map(|i| self.block_word(a, i)).collect();
        let mut left = Vec::with_capacity(nb);
        left.push((vec![ONE], 0.0));
        let mut dead = false;
        for i in 0..nb - 1 {
            let t = &self.tensors[i];
            let m = self.block_matrix(i, words[i]);
            let (prev, s) = &left[i];
            let mut v = vec![ZERO; t.right];
            for (l, &pl) in prev.iter().enumerate() {
                for (r, o) in v.iter_mut().enumerate() {
                    *o += pl * m[l * t.right + r];
                }
            }
            let ns = match normalize(&mut v) {
                Some(x) => s + x,
                None => {
                    dead = true;
                    *s
                }
            };
            left.push((v, ns));
        }
        let mut right = vec![(vec![ONE], 0.0); nb];
        for i in (1..nb).rev() {
            let t = &self.tensors[i];
            let m = self.block_matrix(i, words[i]);
            let (next, s) = right[i].clone();
            let mut v = vec![ZERO; t.left];
            for (l, o) in v.iter_mut().enumerate() {
                for (r, &nr) in next.iter().enumerate() {
                    *o += m[l * t.right + r] * nr;
                }
            }
            let ns = match normalize(&mut v) {
                Some(x) => s + x,
                None => {
                    dead = true;
                    s
                }
            };
            right[i - 1] = (v, ns);
        }
        // phi = left[nb-1] . M_{nb-1} . 1
        let ln_phi = if dead {
            None
        } else {
            let t = &self.tensors[nb - 1];
            let m = self.block_matrix(nb - 1, words[nb - 1]);
            let (v, s) = &left[nb - 1];
            let z: Complex64 = v.iter().enumerate().map(|(l, &x)| x * m[l * t.right]).sum();
            if z == ZERO {
                None
            } else {
                Some(Complex64::new(s + z.norm().ln(), z.arg()))
            }
        };
        Environments { left, right, ln_phi }
    }

    /// `d ln phi(a) / d theta` for every tensor entry.
    pub fn holomorphic_log_derivative(&self, a: SpinConfig) -> Result<Vec<Complex64>> {
        let env = self.environments(a);
        let ln_phi = env.ln_phi.ok_or(Error::ZeroAmplitude { config: a.0 })?;
        let mut out = Vec::with_capacity(self.parameter_count());
        for (i, t) in self.tensors.iter().enumerate() {
            let word = self.block_word(a, i);
            let c = &self.isometries.for_block(i).matrix;
            let (lv, ls) = &env.left[i];
            let (rv, rs) = &env.right[i];
            let pref = (Complex64::new(ls + rs, 0.0) - ln_phi).exp();
            for g in 0..t.chi {
                let cg = c[(g, word)] * pref;
                for &l in lv.iter() {
                    let cl = cg * l;
                    for &r in rv.iter() {
                        out.push(cl * r);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Log-derivatives of the hybrid amplitude for a sampled configuration and its representative.
    pub fn log_derivatives(&self, a_real: SpinConfig, a_repr: SpinConfig) -> Result<LogDerivatives> {
        let at_real = self.holomorphic_log_derivative(a_real)?;
        let at_repr = if a_real == a_repr {
            at_real.clone()
        } else {
            self.holomorphic_log_derivative(a_repr)?
        };
        Ok(LogDerivatives { at_real, at_repr })
    }
}

/// Represents an arbitrary full-space state exactly on a two-block lattice, using
/// identity isometries and `D = 2^b`: `B_1[gamma][0][r] = psi(gamma, r)` and
/// `B_2[gamma][l][0] = delta(gamma, l)`.
pub fn embed_full_state(lattice: &Lattice, sector: &SectorSpec, amplitudes: &[Complex64]) -> Result<HybridState> {
    let n = lattice.n_sites();
    let b = lattice.block_size();
    if lattice.n_blocks() != 2 || amplitudes.len() != 1usize << n {
        return Err(Error::InvalidDimensions(
            "exact embedding needs two blocks and 2^N amplitudes".into(),
        ));
    }
    let dim = 1usize << b;
    let mut b1 = BlockTensor::zeros(dim, 1, dim);
    let mut b2 = BlockTensor::zeros(dim, dim, 1);
    for g in 0..dim {
        for r in 0..dim {
            let a = SpinConfig(0)
                .scatter(&lattice.blocks[0], g)
                .scatter(&lattice.blocks[1], r);
            let k = b1.index(g, 0, r);
            b1.data[k] = amplitudes[a.0 as usize];
        }
        let k = b2.index(g, g, 0);
        b2.data[k] = ONE;
    }
    HybridState::new(
        lattice.clone(),
        sector.clone(),
        IsometryMode::Shared(Isometry::identity(b)),
        dim,
        vec![b1, b2],
    )
}
