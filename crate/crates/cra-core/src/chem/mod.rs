//! Molecular graphs parsed from a practical SMILES subset.
//!
//! Aromaticity is taken as written (lowercase atoms), not perceived; there is
//! no valence model, so hydrogen counts exist only where brackets state them.

mod parse;

pub use parse::{parse, parse_smiles, tokenize, ParseError, Parsed, Token, TokenKind};

/// Element symbols indexed by atomic number - 1.
const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al",
    "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe",
    "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
    "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm",
    "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Atomic number for a canonical element symbol.
pub fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().position(|&s| s == symbol).map(|i| i as u8 + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    /// Canonical symbol ("C", "Cl", ...), always capitalized even when the
    /// source wrote it lowercase for aromaticity.
    pub element: String,
    pub formal_charge: i8,
    /// Bracket atoms carry an explicit count (0 when omitted); organic-subset
    /// atoms have no hydrogen information.
    pub explicit_h: Option<u8>,
    pub aromatic: bool,
    pub isotope: Option<u16>,
}

impl Atom {
    pub fn atomic_number(&self) -> u8 {
        atomic_number(&self.element).expect("parser validated element")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Stable byte code used by the fingerprint hash.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub source: String,
}

impl MolGraph {
    /// Explicit-bond degree per atom.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.atoms.len()];
        for bond in &self.bonds {
            deg[bond.a] += 1;
            deg[bond.b] += 1;
        }
        deg
    }

    /// Adjacency list of (neighbor index, bond order).
    pub fn neighbors(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            adj[bond.a].push((bond.b, bond.order));
            adj[bond.b].push((bond.a, bond.order));
        }
        adj
    }

    /// Connected components via union-find.
    pub fn component_count(&self) -> usize {
        let n = self.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for bond in &self.bonds {
            let (ra, rb) = (find(&mut parent, bond.a), find(&mut parent, bond.b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Independent cycles: |bonds| - |atoms| + components.
    pub fn cycle_rank(&self) -> usize {
        self.bonds.len() + self.component_count() - self.atoms.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_numbers() {
        assert_eq!(atomic_number("H"), Some(1));
        assert_eq!(atomic_number("C"), Some(6));
        assert_eq!(atomic_number("Cl"), Some(17));
        assert_eq!(atomic_number("Og"), Some(118));
        assert_eq!(atomic_number("Xx"), None);
        assert_eq!(atomic_number("c"), None);
    }

    #[test]
    fn bond_codes_are_distinct() {
        let codes = [
            BondOrder::Single.code(),
            BondOrder::Double.code(),
            BondOrder::Triple.code(),
            BondOrder::Aromatic.code(),
        ];
        assert_eq!(codes, [1, 2, 3, 4]);
    }

    #[test]
    fn cycle_rank_counts_components() {
        let salt = parse_smiles("[Na+].[Cl-]").unwrap().graph;
        assert_eq!(salt.component_count(), 2);
        assert_eq!(salt.cycle_rank(), 0);

        let benzene = parse_smiles("c1ccccc1").unwrap().graph;
        assert_eq!(benzene.component_count(), 1);
        assert_eq!(benzene.cycle_rank(), 1);

        let naphthalene = parse_smiles("c1ccc2ccccc2c1").unwrap().graph;
        assert_eq!(naphthalene.cycle_rank(), 2);
    }
}
