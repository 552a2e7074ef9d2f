//! The canonical partition order is part of the model file format, so it is
//! pinned against a checked-in listing.

use permtensor::equilinear::{EquivariantMap, BASIS_NAME};
use permtensor::partitions::{enumerate_partitions, partition_index};

#[test]
fn arity_four_matches_golden_listing() {
    let golden: Vec<String> = include_str!("data/partitions_m4.txt")
        .lines()
        .map(str::to_owned)
        .collect();
    let got: Vec<String> = enumerate_partitions(4)
        .unwrap()
        .iter()
        .map(|p| p.rgs().iter().map(|d| char::from(b'0' + d)).collect())
        .collect();
    assert_eq!(got, golden);
}

#[test]
fn order_is_lexicographic_and_indexed() {
    for m in 0..=7 {
        let parts = enumerate_partitions(m).unwrap();
        for w in parts.windows(2) {
            assert!(w[0].rgs() < w[1].rgs());
        }
        for (i, p) in parts.iter().enumerate() {
            assert_eq!(partition_index(p), i);
        }
    }
}

#[test]
fn matrix_operator_space() {
    assert_eq!(BASIS_NAME, "exact-pattern-v1");
    assert_eq!(EquivariantMap::basis_len(2, 2).unwrap(), 15);
    assert_eq!(EquivariantMap::basis_len(2, 0).unwrap(), 2);
    assert_eq!(EquivariantMap::basis_len(2, 1).unwrap(), 5);
}
