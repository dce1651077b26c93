//! Hashed circular fingerprints over integer atom invariants.
//!
//! The whole path is fixed-width integer arithmetic (FNV-1a 64-bit), so bit
//! patterns are identical across platforms and runs. Golden bit lists under
//! tests/golden pin the scheme.

use crate::chem::{Atom, MolGraph};
use crate::rng::fnv1a64;

/// Initial (radius-0) atom invariant: FNV-1a over the byte encoding
/// [atomic number, degree, formal charge + 9, aromatic flag, explicit H or 255].
pub fn atom_invariant(atom: &Atom, degree: usize) -> u64 {
    let bytes = [
        atom.atomic_number(),
        degree.min(255) as u8,
        (atom.formal_charge as i16 + 9) as u8,
        atom.aromatic as u8,
        atom.explicit_h.unwrap_or(255),
    ];
    fnv1a64(&bytes)
}

/// Bit vector of hashed neighborhood invariants.
///
/// Round r+1 hashes each atom's invariant together with its neighbors'
/// round-r invariants, sorted by (bond code, invariant) so the result is
/// independent of input atom order. Every invariant from every round sets
/// bit (invariant mod nbits).
pub fn circular_fingerprint(mol: &MolGraph, radius: usize, nbits: usize) -> Vec<u8> {
    assert!(nbits.is_power_of_two(), "nbits must be a power of two");
    let degrees = mol.degrees();
    let adjacency = mol.neighbors();

    let mut inv: Vec<u64> = mol
        .atoms
        .iter()
        .zip(&degrees)
        .map(|(a, &d)| atom_invariant(a, d))
        .collect();

    let mut bits = vec![0u8; nbits];
    let set_round = |inv: &[u64], bits: &mut Vec<u8>| {
        for &v in inv {
            bits[(v % nbits as u64) as usize] = 1;
        }
    };
    set_round(&inv, &mut bits);

    let mut buf = Vec::new();
    for _ in 0..radius {
        let mut next = Vec::with_capacity(inv.len());
        for (v, neighbors) in adjacency.iter().enumerate() {
            let mut entries: Vec<(u8, u64)> = neighbors
                .iter()
                .map(|&(u, order)| (order.code(), inv[u]))
                .collect();
            entries.sort_unstable();
            buf.clear();
            buf.extend_from_slice(&inv[v].to_le_bytes());
            for (code, neighbor_inv) in entries {
                buf.push(code);
                buf.extend_from_slice(&neighbor_inv.to_le_bytes());
            }
            next.push(fnv1a64(&buf));
        }
        inv = next;
        set_round(&inv, &mut bits);
    }
    bits
}

/// Indices of set bits, ascending.
pub fn set_bit_indices(bits: &[u8]) -> Vec<usize> {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b != 0)
        .map(|(i, _)| i)
        .collect()
}

/// Tanimoto similarity |A∩B| / |A∪B| over set bits; 1.0 for two empty sets.
pub fn tanimoto(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len(), "fingerprint lengths differ");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        inter += (x != 0 && y != 0) as usize;
        union += (x != 0 || y != 0) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::rng::Rng;

    fn fp(s: &str) -> Vec<u8> {
        circular_fingerprint(&parse_smiles(s).unwrap().graph, 2, 2048)
    }

    #[test]
    fn invariant_depends_on_each_field() {
        let base = Atom {
            element: "C".into(),
            formal_charge: 0,
            explicit_h: None,
            aromatic: false,
            isotope: None,
        };
        let v1 = atom_invariant(&base, 1);
        assert_eq!(v1, atom_invariant(&base.clone(), 1));
        assert_ne!(v1, atom_invariant(&base, 2));

        let mut charged = base.clone();
        charged.formal_charge = 1;
        assert_ne!(v1, atom_invariant(&charged, 1));

        let mut aromatic = base.clone();
        aromatic.aromatic = true;
        assert_ne!(v1, atom_invariant(&aromatic, 1));

        let mut with_h = base.clone();
        with_h.explicit_h = Some(1);
        assert_ne!(v1, atom_invariant(&with_h, 1));

        let mut nitrogen = base;
        nitrogen.element = "N".into();
        assert_ne!(v1, atom_invariant(&nitrogen, 1));
    }

    #[test]
    fn carbon_degree_one_invariant_constant() {
        // Byte string [6, 1, 9, 0, 255] under FNV-1a 64.
        let atom = Atom {
            element: "C".into(),
            formal_charge: 0,
            explicit_h: None,
            aromatic: false,
            isotope: None,
        };
        assert_eq!(atom_invariant(&atom, 1), 0xeec26d7bb200f402);
        assert_eq!(atom_invariant(&atom, 2), 0x47f6ad94f95140f5);
    }

    #[test]
    fn methane_radius_zero_single_bit() {
        let mol = parse_smiles("C").unwrap().graph;
        let bits = circular_fingerprint(&mol, 0, 2048);
        assert_eq!(set_bit_indices(&bits).len(), 1);
    }

    #[test]
    fn atom_order_invariance_smoke() {
        assert_eq!(fp("CCO"), fp("OCC"));
        assert_eq!(fp("CC(=O)O"), fp("OC(C)=O"));
    }

    #[test]
    fn permuting_graph_atoms_preserves_bits() {
        let mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap().graph;
        let want = circular_fingerprint(&mol, 2, 2048);
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let permuted = permute_atoms(&mol, &mut rng);
            assert_eq!(circular_fingerprint(&permuted, 2, 2048), want);
        }
    }

    /// Rebuilds the graph with atoms relabeled by a random permutation.
    pub(crate) fn permute_atoms(mol: &MolGraph, rng: &mut Rng) -> MolGraph {
        let n = mol.atoms.len();
        let perm = rng.sample_indices(n, n);
        // perm[old] = new position.
        let mut atoms = vec![None; n];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = Some(mol.atoms[old].clone());
        }
        let bonds = mol
            .bonds
            .iter()
            .map(|b| crate::chem::Bond { a: perm[b.a], b: perm[b.b], order: b.order })
            .collect();
        MolGraph {
            atoms: atoms.into_iter().map(Option::unwrap).collect(),
            bonds,
            source: mol.source.clone(),
        }
    }

    #[test]
    fn radius_grows_bit_count_monotonically() {
        let mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap().graph;
        let mut last = 0;
        for radius in 0..4 {
            let count = set_bit_indices(&circular_fingerprint(&mol, radius, 2048)).len();
            assert!(count >= last);
            last = count;
        }
    }

    #[test]
    fn tanimoto_properties() {
        let a = fp("CCO");
        let b = fp("CCN");
        assert_eq!(tanimoto(&a, &a), 1.0);
        let t = tanimoto(&a, &b);
        assert!(t > 0.0 && t < 1.0, "{t}");
        assert_eq!(tanimoto(&a, &b), tanimoto(&b, &a));
    }
}
