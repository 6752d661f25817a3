//! Binary checkpoints of a [`HybridState`] with a JSON sidecar manifest.
//!
//! All numbers are little-endian. Complex numbers are stored as `(re, im)` pairs of
//! `f64`. The file ends with an FNV-1a hash of everything before it.

use super::{BlockTensor, HybridState, IsometryMode};
use crate::error::{Error, Result};
use crate::exact::Isometry;
use crate::model::{build_lattice, BlockShape, LatticeKind};
use crate::symmetry::{Generator, QuantumNumber, SectorSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"HVMCCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub lattice: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    pub block: BlockShape,
    pub n_sites: usize,
    pub block_size: usize,
    pub n_blocks: usize,
    pub chi: usize,
    pub bond_dim: usize,
    pub shared_isometry: bool,
    pub parameter_count: usize,
    pub sector: SectorSpec,
    pub sector_label: String,
}

impl CheckpointManifest {
    pub fn of(state: &HybridState) -> Self {
        let d = state.dims();
        let lat = state.lattice();
        CheckpointManifest {
            format_version: VERSION,
            lattice: lat.kind,
            lx: lat.lx,
            ly: lat.ly,
            block: lat.block,
            n_sites: d.n_sites,
            block_size: d.block_size,
            n_blocks: d.n_blocks,
            chi: d.chi,
            bond_dim: d.bond_dim,
            shared_isometry: state.isometries().is_shared(),
            parameter_count: state.parameter_count(),
            sector: state.sector().clone(),
            sector_label: state.sector().label(),
        }
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn generator_code(g: Generator) -> u8 {
    match g {
        Generator::TranslationX => 0,
        Generator::TranslationY => 1,
        Generator::MirrorX => 2,
        Generator::MirrorY => 3,
        Generator::SiteMirrorX => 4,
        Generator::Diagonal1 => 5,
        Generator::Diagonal2 => 6,
        Generator::SpinFlip => 7,
    }
}

fn generator_from_code(c: u8) -> Result<Generator> {
    Ok(match c {
        0 => Generator::TranslationX,
        1 => Generator::TranslationY,
        2 => Generator::MirrorX,
        3 => Generator::MirrorY,
        4 => Generator::SiteMirrorX,
        5 => Generator::Diagonal1,
        6 => Generator::Diagonal2,
        7 => Generator::SpinFlip,
        _ => return Err(Error::CorruptCheckpoint(format!("unknown generator code {c}"))),
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn c64(&mut self, v: Complex64) {
        self.f64(v.re);
        self.f64(v.im);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
    // guards allocations against absurd counts in damaged files
    fn count(&mut self, elem_bytes: usize) -> Result<usize> {
        let n = self.u32()?;
        if n.saturating_mul(elem_bytes) > self.bytes.len() - self.pos {
            return Err(Error::CorruptCheckpoint("truncated file".into()));
        }
        Ok(n)
    }
}

fn write_isometry(w: &mut Writer, c: &Isometry) {
    w.u32(c.chi());
    w.u32(c.block_dim());
    for i in 0..c.chi() {
        for j in 0..c.block_dim() {
            w.c64(c.matrix[(i, j)]);
        }
    }
    w.u32(c.weights.len());
    for &x in &c.weights {
        w.f64(x);
    }
}

fn read_isometry(r: &mut Reader) -> Result<Isometry> {
    let chi = r.u32()?;
    let dim = r.count(16 * chi.max(1))?;
    let mut m = DMatrix::<Complex64>::zeros(chi, dim);
    for i in 0..chi {
        for j in 0..dim {
            m[(i, j)] = r.c64()?;
        }
    }
    let nw = r.count(8)?;
    let weights = (0..nw).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut iso = Isometry::from_matrix(m).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    iso.weights = weights;
    Ok(iso)
}

fn encode(state: &HybridState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    let lat = state.lattice();
    w.u8(match lat.kind {
        LatticeKind::Chain => 0,
        LatticeKind::Torus => 1,
    });
    w.u32(lat.lx);
    w.u32(lat.ly);
    w.u32(lat.block.bx);
    w.u32(lat.block.by);
    let d = state.dims();
    for x in [d.n_sites, d.block_size, d.n_blocks, d.chi, d.bond_dim] {
        w.u32(x);
    }
    w.u8(u8::from(state.isometries().is_shared()));
    let sector = state.sector();
    w.u32(sector.quantum_numbers.len());
    for (g, q) in &sector.quantum_numbers {
        w.u8(generator_code(*g));
        match *q {
            QuantumNumber::Momentum(k) => {
                w.u8(0);
                w.f64(k);
            }
            QuantumNumber::Parity(p) => {
                w.u8(1);
                w.f64(p as f64);
            }
        }
        w.c64(q.character());
    }
    match sector.two_sz {
        Some(m) => {
            w.u8(1);
            w.i32(m);
        }
        None => {
            w.u8(0);
            w.i32(0);
        }
    }
    match state.isometries() {
        IsometryMode::Shared(c) => {
            w.u32(1);
            write_isometry(&mut w, c);
        }
        IsometryMode::PerBlock(cs) => {
            w.u32(cs.len());
            for c in cs {
                write_isometry(&mut w, c);
            }
        }
    }
    w.u32(state.tensors().len());
    for t in state.tensors() {
        w.u32(t.chi);
        w.u32(t.left);
        w.u32(t.right);
        for &x in &t.data {
            w.c64(x);
        }
    }
    let h = fnv1a(&w.0);
    w.0.extend_from_slice(&h.to_le_bytes());
    w.0
}

fn decode(bytes: &[u8]) -> Result<HybridState> {
    if bytes.len() < MAGIC.len() + 12 {
        return Err(Error::CorruptCheckpoint("truncated file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::CorruptCheckpoint(format!("unsupported version {version}")));
    }
    if fnv1a(body) != stored {
        return Err(Error::CorruptCheckpoint("checksum mismatch (truncated or damaged)".into()));
    }
    let kind = match r.u8()? {
        0 => LatticeKind::Chain,
        1 => LatticeKind::Torus,
        k => return Err(Error::CorruptCheckpoint(format!("unknown lattice kind {k}"))),
    };
    let (lx, ly, bx, by) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let dims: Vec<usize> = (0..5).map(|_| r.u32()).collect::<Result<_>>()?;
    let (n, b, nb, chi, bond) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
    let shared = r.u8()? != 0;
    let nq = r.count(26)?;
    let mut qns = Vec::with_capacity(nq);
    for _ in 0..nq {
        let g = generator_from_code(r.u8()?)?;
        let kind = r.u8()?;
        let v = r.f64()?;
        let _character = r.c64()?;
        let q = match kind {
            0 => QuantumNumber::Momentum(v),
            1 => QuantumNumber::Parity(v as i8),
            _ => return Err(Error::CorruptCheckpoint("unknown quantum number kind".into())),
        };
        qns.push((g, q));
    }
    let has_sz = r.u8()? != 0;
    let m = r.i32()?;
    let sector = SectorSpec {
        quantum_numbers: qns,
        two_sz: has_sz.then_some(m),
    };
    let n_iso = r.u32()?;
    if (shared && n_iso != 1) || (!shared && n_iso != nb) {
        return Err(Error::CorruptCheckpoint("isometry count disagrees with header".into()));
    }
    let isos = (0..n_iso).map(|_| read_isometry(&mut r)).collect::<Result<Vec<_>>>()?;
    let isometries = if shared {
        IsometryMode::Shared(isos.into_iter().next().unwrap())
    } else {
        IsometryMode::PerBlock(isos)
    };
    let nt = r.u32()?;
    let mut tensors = Vec::with_capacity(nt.min(1024));
    for _ in 0..nt {
        let (c, l, rr) = (r.u32()?, r.u32()?, r.u32()?);
        let len = c.saturating_mul(l).saturating_mul(rr);
        if len.saturating_mul(16) > body.len() - r.pos {
            return Err(Error::CorruptCheckpoint("truncated file".into()));
        }
        let data = (0..len).map(|_| r.c64()).collect::<Result<Vec<_>>>()?;
        tensors.push(BlockTensor {
            chi: c,
            left: l,
            right: rr,
            data,
        });
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    let lat_dims: Vec<usize> = match kind {
        LatticeKind::Chain => vec![lx],
        LatticeKind::Torus => vec![lx, ly],
    };
    let lattice = build_lattice(kind, &lat_dims, BlockShape { bx, by })
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if lattice.n_sites() != n || lattice.block_size() != b || lattice.n_blocks() != nb {
        return Err(Error::CorruptCheckpoint("header dimensions inconsistent with lattice".into()));
    }
    let state = HybridState::new(lattice, sector, isometries, bond, tensors)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if state.dims().chi != chi {
        return Err(Error::CorruptCheckpoint("chi inconsistent with isometry".into()));
    }
    Ok(state)
}

/// Writes `path` and the manifest `path.json`.
pub fn save_checkpoint(state: &HybridState, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, encode(state))?;
    let manifest = serde_json::to_string_pretty(&CheckpointManifest::of(state))?;
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<HybridState> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

/// Loads a checkpoint and checks it against the expected shape.
pub fn load_checkpoint_expecting(
    path: &Path,
    n_sites: usize,
    block_size: usize,
    chi: usize,
    bond_dim: usize,
) -> Result<HybridState> {
    let st = load_checkpoint(path)?;
    let d = st.dims();
    let expected = (n_sites, block_size, chi, bond_dim);
    let got = (d.n_sites, d.block_size, d.chi, d.bond_dim);
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint has (N, b, chi, D) = {got:?}, expected {expected:?}"
        )));
    }
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::SpinConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state() -> HybridState {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lat = build_lattice(LatticeKind::Chain, &[12], BlockShape::linear(4)).unwrap();
        let iso = Isometry::random(5, 4, &mut rng);
        HybridState::random(
            lat,
            SectorSpec::chain(true, -1, 1, 0),
            IsometryMode::Shared(iso),
            3,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let st = state();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ckpt");
        save_checkpoint(&st, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.parameters(), st.parameters());
        assert_eq!(back.sector(), st.sector());
        assert_eq!(back.isometry(0), st.isometry(0));
        for a in [0u64, 0x5a5, 0xfff] {
            assert_eq!(
                back.amplitude_real(SpinConfig(a)),
                st.amplitude_real(SpinConfig(a))
            );
        }
        let manifest: CheckpointManifest =
            serde_json::from_str(&std::fs::read_to_string(manifest_path(&p)).unwrap()).unwrap();
        assert_eq!(manifest.parameter_count, st.parameter_count());
    }

    #[test]
    fn truncation_and_mismatch_are_reported() {
        let st = state();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ckpt");
        save_checkpoint(&st, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&p, &bytes[..cut]).unwrap();
            assert!(matches!(load_checkpoint(&p), Err(Error::CorruptCheckpoint(_))));
        }
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint_expecting(&p, 12, 4, 5, 4),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(load_checkpoint_expecting(&p, 12, 4, 5, 3).is_ok());
    }
}
