mod common;

use common::*;
use hybrid_vmc::model::Lattice;
use hybrid_vmc::symmetry::{enumerate_sector_basis, Generator, QuantumNumber, SectorSpec, SymmetryGroup, DEFAULT_ENUMERATION_LIMIT};
use hybrid_vmc::SpinConfig;
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::f64::consts::PI;

fn groups() -> Vec<(Lattice, SymmetryGroup)> {
    let mut out = Vec::new();
    for n in [6, 8, 10] {
        let lat = chain(n, 2);
        for spec in chain_sectors(n) {
            if let Ok(g) = SymmetryGroup::new(&lat, &spec) {
                out.push((lat.clone(), g));
            }
        }
    }
    let lat = torus(4, 2);
    for spec in torus_sectors().into_iter().step_by(9) {
        if let Ok(g) = SymmetryGroup::new(&lat, &spec) {
            out.push((lat.clone(), g));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn representative_is_idempotent_and_orbit_invariant(which in 0usize..1000, raw in any::<u64>()) {
        let all = groups();
        let (lat, group) = &all[which % all.len()];
        let n = lat.n_sites();
        let a = SpinConfig(raw & ((1u64 << n) - 1));
        let (r, g) = group.representative(a);
        prop_assert_eq!(group.apply(g, a), r);
        prop_assert_eq!(group.representative(r).0, r);
        for h in 0..group.order() {
            let b = group.apply(h, a);
            prop_assert_eq!(group.representative(b).0, r);
            prop_assert!(r.0 <= b.0);
        }
    }

    #[test]
    fn orbit_size_divides_group_order(which in 0usize..1000, raw in any::<u64>()) {
        let all = groups();
        let (lat, group) = &all[which % all.len()];
        let a = SpinConfig(raw & ((1u64 << lat.n_sites()) - 1));
        let size = group.orbit_size(a);
        prop_assert_eq!(group.order() % size, 0);
        let distinct: BTreeSet<u64> = (0..group.order()).map(|g| group.apply(g, a).0).collect();
        prop_assert_eq!(distinct.len(), size);
    }
}

#[test]
fn characters_are_multiplicative_and_composition_matches_action() {
    for (lat, group) in groups() {
        let els = group.elements();
        for i in 0..els.len() {
            for j in 0..els.len() {
                let gh = els[i].compose(&els[j]);
                let k = els.iter().position(|e| *e == gh).expect("group closed under composition");
                for s in 0..lat.n_sites() {
                    let a = SpinConfig(1 << s);
                    assert_eq!(gh.apply(a), els[i].apply(els[j].apply(a)));
                }
                let lhs = group.character(i) * group.character(j);
                assert!((lhs - group.character(k)).norm() < 1e-12, "{}", group.spec().label());
            }
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn sector_dim(lat: &Lattice, spec: &SectorSpec) -> usize {
    match SymmetryGroup::new(lat, spec) {
        Ok(g) => enumerate_sector_basis(&g, DEFAULT_ENUMERATION_LIMIT).unwrap().len(),
        Err(_) => 0,
    }
}

#[test]
fn momentum_sector_dimensions_sum_to_magnetization_block() {
    for n in [6usize, 8, 10, 12] {
        let lat = chain(n, 2);
        for two_sz in [0, 2, 4] {
            let n_down = (n as i32 - two_sz) / 2;
            let total: usize = (0..n)
                .map(|j| sector_dim(&lat, &SectorSpec::translations_only(2.0 * PI * j as f64 / n as f64, Some(two_sz))))
                .sum();
            assert_eq!(total as u64, binomial(n as u64, n_down as u64), "N={n} 2Sz={two_sz}");
        }
        // translations with spin inversion at 2Sz = 0
        let total: usize = (0..n)
            .flat_map(|j| [1, -1].map(move |z| (j, z)))
            .map(|(j, z)| {
                let spec = SectorSpec {
                    quantum_numbers: vec![
                        (Generator::TranslationX, QuantumNumber::Momentum(2.0 * PI * j as f64 / n as f64)),
                        (Generator::SpinFlip, QuantumNumber::Parity(z)),
                    ],
                    two_sz: Some(0),
                };
                sector_dim(&lat, &spec)
            })
            .sum();
        assert_eq!(total as u64, binomial(n as u64, n as u64 / 2));
    }
}

#[test]
fn torus_translation_sectors_partition_the_zero_magnetization_block() {
    let lat = torus(4, 2);
    let mut total = 0;
    for jx in 0..4 {
        for jy in 0..4 {
            let spec = SectorSpec {
                quantum_numbers: vec![
                    (Generator::TranslationX, QuantumNumber::Momentum(PI * jx as f64 / 2.0)),
                    (Generator::TranslationY, QuantumNumber::Momentum(PI * jy as f64 / 2.0)),
                ],
                two_sz: Some(0),
            };
            total += sector_dim(&lat, &spec);
        }
    }
    assert_eq!(total as u64, binomial(16, 8));
}

fn bond_set(lat: &Lattice, g: f64) -> BTreeSet<(usize, usize, u64)> {
    heisenberg(lat, g)
        .iter()
        .map(|t| (t.i.min(t.j), t.i.max(t.j), t.coupling.to_bits()))
        .collect()
}

#[test]
fn hamiltonian_is_invariant_under_every_generator() {
    let cases = [
        (chain(8, 2), vec![Generator::TranslationX, Generator::MirrorX, Generator::SiteMirrorX]),
        (chain(12, 4), vec![Generator::TranslationX, Generator::MirrorX, Generator::SiteMirrorX]),
        (
            torus(4, 2),
            vec![
                Generator::TranslationX,
                Generator::TranslationY,
                Generator::MirrorX,
                Generator::MirrorY,
                Generator::Diagonal1,
                Generator::Diagonal2,
            ],
        ),
    ];
    for (lat, gens) in cases {
        let bonds = bond_set(&lat, 0.3);
        for gen in gens {
            let op = generator_op(&lat, gen);
            let mapped: BTreeSet<_> = bonds
                .iter()
                .map(|&(i, j, c)| (op.perm[i].min(op.perm[j]), op.perm[i].max(op.perm[j]), c))
                .collect();
            assert_eq!(mapped, bonds, "{gen:?}");
        }
    }
}

#[test]
fn coupling_sums_count_each_bond_once() {
    let g = 0.3;
    for n in [6, 8, 16] {
        let s: f64 = heisenberg(&chain(n, 2), g).iter().map(|t| t.coupling).sum();
        assert!((s - n as f64 * (1.0 + g)).abs() < 1e-12, "N={n}");
    }
    for l in [4, 6] {
        let n = (l * l) as f64;
        let s: f64 = heisenberg(&torus(l, 2), g).iter().map(|t| t.coupling).sum();
        assert!((s - 2.0 * n * (1.0 + g)).abs() < 1e-12, "L={l}");
    }
}
