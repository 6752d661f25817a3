//! Lattice geometry and the J1-J2 Heisenberg Hamiltonian.
//!
//! Sites of a chain are numbered `0..L`. Sites of an `Lx x Ly` torus are numbered
//! `x + Lx * y`. Blocks on the torus are rectangular `bx x by` tiles whose sites are
//! listed row-major inside the tile; the tiles themselves are chained along a
//! boustrophedon path: tile row 0 left to right, tile row 1 right to left, and so on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const MAX_SITES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Chain,
    Torus,
}

/// Sites per block: `(b, 1)` on a chain, `(bx, by)` on a torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub bx: usize,
    pub by: usize,
}

impl BlockShape {
    pub fn linear(b: usize) -> Self {
        BlockShape { bx: b, by: 1 }
    }

    pub fn sites(&self) -> usize {
        self.bx * self.by
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub kind: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    pub nn_bonds: Vec<(usize, usize)>,
    pub nnn_bonds: Vec<(usize, usize)>,
    pub block: BlockShape,
    /// `blocks[i]` lists the sites of the `i`-th block along the MPS chain.
    pub blocks: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn block_size(&self) -> usize {
        self.block.sites()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn site_xy(&self, s: usize) -> (usize, usize) {
        (s % self.lx, s / self.lx)
    }

    pub fn site_at(&self, x: usize, y: usize) -> usize {
        (x % self.lx) + self.lx * (y % self.ly)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerm {
    pub i: usize,
    pub j: usize,
    pub coupling: f64,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Collects unordered pairs, dropping wrap-around duplicates while keeping first-seen order.
fn dedup_bonds(raw: impl IntoIterator<Item = (usize, usize)>, what: &str) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut dropped = 0usize;
    for (a, b) in raw {
        let p = ordered(a, b);
        if seen.insert(p) {
            out.push(p);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} duplicate wrap-around {what} bonds");
    }
    out
}

/// Builds a periodic chain (`dims = [L]`) or torus (`dims = [Lx, Ly]`).
pub fn build_lattice(kind: LatticeKind, dims: &[usize], block: BlockShape) -> Result<Lattice> {
    match kind {
        LatticeKind::Chain => {
            let [l] = dims else {
                return Err(Error::InvalidLattice(format!(
                    "chain needs one dimension, got {dims:?}"
                )));
            };
            let l = *l;
            if l < 4 {
                return Err(Error::InvalidLattice(format!("chain length {l} below minimum 4")));
            }
            if l > MAX_SITES {
                return Err(Error::InvalidLattice(format!("{l} sites exceeds {MAX_SITES}")));
            }
            if block.by != 1 || block.bx == 0 {
                return Err(Error::InvalidLattice(format!("invalid chain block {block:?}")));
            }
            let b = block.bx;
            if l % b != 0 {
                return Err(Error::InvalidLattice(format!(
                    "chain length {l} not divisible by block size {b}"
                )));
            }
            let nn = dedup_bonds((0..l).map(|i| (i, (i + 1) % l)), "nearest-neighbor");
            let nnn = dedup_bonds((0..l).map(|i| (i, (i + 2) % l)), "next-nearest-neighbor");
            let blocks = (0..l / b).map(|k| (k * b..(k + 1) * b).collect()).collect();
            Ok(Lattice {
                kind,
                lx: l,
                ly: 1,
                nn_bonds: nn,
                nnn_bonds: nnn,
                block,
                blocks,
            })
        }
        LatticeKind::Torus => {
            let [lx, ly] = dims else {
                return Err(Error::InvalidLattice(format!(
                    "torus needs two dimensions, got {dims:?}"
                )));
            };
            let (lx, ly) = (*lx, *ly);
            if lx < 4 || ly < 4 {
                return Err(Error::InvalidLattice(format!(
                    "torus {lx}x{ly} below minimum 4x4"
                )));
            }
            if lx * ly > MAX_SITES {
                return Err(Error::InvalidLattice(format!(
                    "{} sites exceeds {MAX_SITES}",
                    lx * ly
                )));
            }
            if block.bx == 0 || block.by == 0 || lx % block.bx != 0 || ly % block.by != 0 {
                return Err(Error::InvalidLattice(format!(
                    "torus {lx}x{ly} not tileable by {}x{} blocks",
                    block.bx, block.by
                )));
            }
            let at = |x: usize, y: usize| (x % lx) + lx * (y % ly);
            let mut nn_raw = Vec::with_capacity(2 * lx * ly);
            let mut nnn_raw = Vec::with_capacity(2 * lx * ly);
            for y in 0..ly {
                for x in 0..lx {
                    let s = at(x, y);
                    nn_raw.push((s, at(x + 1, y)));
                    nn_raw.push((s, at(x, y + 1)));
                    nnn_raw.push((s, at(x + 1, y + 1)));
                    nnn_raw.push((s, at(x + 1, y + ly - 1)));
                }
            }
            let nn = dedup_bonds(nn_raw, "nearest-neighbor");
            let nnn = dedup_bonds(nnn_raw, "next-nearest-neighbor");

            let (tx, ty) = (lx / block.bx, ly / block.by);
            let mut blocks = Vec::with_capacity(tx * ty);
            for row in 0..ty {
                let cols: Vec<usize> = if row % 2 == 0 {
                    (0..tx).collect()
                } else {
                    (0..tx).rev().collect()
                };
                for col in cols {
                    let mut sites = Vec::with_capacity(block.sites());
                    for dy in 0..block.by {
                        for dx in 0..block.bx {
                            sites.push(at(col * block.bx + dx, row * block.by + dy));
                        }
                    }
                    blocks.push(sites);
                }
            }
            Ok(Lattice {
                kind,
                lx,
                ly,
                nn_bonds: nn,
                nnn_bonds: nnn,
                block,
                blocks,
            })
        }
    }
}

/// One term per bond: `J1` on nearest neighbors, `g * J1` on next-nearest neighbors.
/// Terms with coupling exactly zero are omitted.
pub fn hamiltonian_terms(lattice: &Lattice, j1: f64, g: f64) -> Vec<HamiltonianTerm> {
    let j2 = g * j1;
    let nn = lattice.nn_bonds.iter().map(|&(i, j)| (i, j, j1));
    let nnn = lattice.nnn_bonds.iter().map(|&(i, j)| (i, j, j2));
    nn.chain(nnn)
        .filter(|&(_, _, c)| c != 0.0)
        .map(|(i, j, coupling)| HamiltonianTerm { i, j, coupling })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_4_bonds() {
        let lat = build_lattice(LatticeKind::Chain, &[4], BlockShape::linear(2)).unwrap();
        assert_eq!(lat.nn_bonds, vec![(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert_eq!(lat.nnn_bonds, vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn chain_8_blocks() {
        let lat = build_lattice(LatticeKind::Chain, &[8], BlockShape::linear(4)).unwrap();
        assert_eq!(lat.blocks, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
        assert_eq!(lat.nn_bonds.len(), 8);
        assert_eq!(lat.nnn_bonds.len(), 8);
    }

    #[test]
    fn torus_4x4_bonds_by_enumeration() {
        let lat = build_lattice(LatticeKind::Torus, &[4, 4], BlockShape { bx: 2, by: 2 }).unwrap();
        // Brute force: pairs at squared periodic distance 1 are nn, 2 are nnn.
        let dist2 = |a: usize, b: usize| {
            let (ax, ay) = (a % 4, a / 4);
            let (bx, by) = (b % 4, b / 4);
            let dx = (ax as i64 - bx as i64).rem_euclid(4).min((bx as i64 - ax as i64).rem_euclid(4));
            let dy = (ay as i64 - by as i64).rem_euclid(4).min((by as i64 - ay as i64).rem_euclid(4));
            dx * dx + dy * dy
        };
        let mut nn = Vec::new();
        let mut nnn = Vec::new();
        for a in 0..16 {
            for b in a + 1..16 {
                match dist2(a, b) {
                    1 => nn.push((a, b)),
                    2 => nnn.push((a, b)),
                    _ => {}
                }
            }
        }
        assert_eq!(nn.len(), 32);
        assert_eq!(nnn.len(), 32);
        let mut got_nn = lat.nn_bonds.clone();
        got_nn.sort();
        let mut got_nnn = lat.nnn_bonds.clone();
        got_nnn.sort();
        assert_eq!(got_nn, nn);
        assert_eq!(got_nnn, nnn);
        assert_eq!(lat.n_blocks(), 4);
        assert_eq!(lat.blocks[0], vec![0, 1, 4, 5]);
        assert_eq!(lat.blocks[1], vec![2, 3, 6, 7]);
        // snake: second tile row runs right to left
        assert_eq!(lat.blocks[2], vec![10, 11, 14, 15]);
        assert_eq!(lat.blocks[3], vec![8, 9, 12, 13]);
    }

    #[test]
    fn every_site_has_expected_degree() {
        for (kind, dims, block, deg) in [
            (LatticeKind::Chain, vec![10], BlockShape::linear(2), 2),
            (LatticeKind::Torus, vec![6, 6], BlockShape { bx: 2, by: 2 }, 4),
        ] {
            let lat = build_lattice(kind, &dims, block).unwrap();
            let n = lat.n_sites();
            for bonds in [&lat.nn_bonds, &lat.nnn_bonds] {
                let mut count = vec![0; n];
                for &(i, j) in bonds.iter() {
                    assert_ne!(i, j);
                    count[i] += 1;
                    count[j] += 1;
                }
                assert!(count.iter().all(|&c| c == deg), "{count:?}");
            }
            let mut all: Vec<usize> = lat.blocks.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(build_lattice(LatticeKind::Chain, &[2], BlockShape::linear(2)).is_err());
        assert!(build_lattice(LatticeKind::Chain, &[10], BlockShape::linear(4)).is_err());
        assert!(build_lattice(LatticeKind::Torus, &[3, 4], BlockShape { bx: 1, by: 1 }).is_err());
        assert!(build_lattice(LatticeKind::Torus, &[6, 6], BlockShape { bx: 4, by: 2 }).is_err());
        assert!(build_lattice(LatticeKind::Chain, &[66], BlockShape::linear(2)).is_err());
    }

    #[test]
    fn term_counts() {
        let lat = build_lattice(LatticeKind::Chain, &[4], BlockShape::linear(2)).unwrap();
        let t = hamiltonian_terms(&lat, 1.0, 0.0);
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|t| t.coupling == 1.0));

        let lat = build_lattice(LatticeKind::Chain, &[32], BlockShape::linear(4)).unwrap();
        let t = hamiltonian_terms(&lat, 1.0, 0.2);
        assert_eq!(t.iter().filter(|t| t.coupling == 1.0).count(), 32);
        assert_eq!(t.iter().filter(|t| t.coupling == 0.2).count(), 32);

        let lat = build_lattice(LatticeKind::Torus, &[6, 6], BlockShape { bx: 2, by: 2 }).unwrap();
        let t = hamiltonian_terms(&lat, 1.0, 0.5);
        assert_eq!(t.iter().filter(|t| t.coupling == 1.0).count(), 72);
        assert_eq!(t.iter().filter(|t| t.coupling == 0.5).count(), 72);
        let total: f64 = t.iter().map(|t| t.coupling.abs()).sum();
        assert_eq!(total, 72.0 + 0.5 * 72.0);
    }
}
