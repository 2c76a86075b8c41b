//! Element symbols, atomic numbers and standard atomic weights.

/// (atomic number, symbol, standard atomic weight)
const TABLE: &[(u8, &str, f64)] = &[
    (1, "H", 1.008),
    (2, "He", 4.0026),
    (3, "Li", 6.94),
    (4, "Be", 9.0122),
    (5, "B", 10.81),
    (6, "C", 12.011),
    (7, "N", 14.007),
    (8, "O", 15.999),
    (9, "F", 18.998),
    (10, "Ne", 20.180),
    (11, "Na", 22.990),
    (12, "Mg", 24.305),
    (13, "Al", 26.982),
    (14, "Si", 28.085),
    (15, "P", 30.974),
    (16, "S", 32.06),
    (17, "Cl", 35.45),
    (18, "Ar", 39.95),
    (19, "K", 39.098),
    (20, "Ca", 40.078),
    (21, "Sc", 44.956),
    (22, "Ti", 47.867),
    (23, "V", 50.942),
    (24, "Cr", 51.996),
    (25, "Mn", 54.938),
    (26, "Fe", 55.845),
    (27, "Co", 58.933),
    (28, "Ni", 58.693),
    (29, "Cu", 63.546),
    (30, "Zn", 65.38),
    (31, "Ga", 69.723),
    (32, "Ge", 72.630),
    (33, "As", 74.922),
    (34, "Se", 78.971),
    (35, "Br", 79.904),
    (36, "Kr", 83.798),
    (37, "Rb", 85.468),
    (38, "Sr", 87.62),
    (39, "Y", 88.906),
    (40, "Zr", 91.224),
    (42, "Mo", 95.95),
    (44, "Ru", 101.07),
    (45, "Rh", 102.91),
    (46, "Pd", 106.42),
    (47, "Ag", 107.87),
    (48, "Cd", 112.41),
    (50, "Sn", 118.71),
    (51, "Sb", 121.76),
    (52, "Te", 127.60),
    (53, "I", 126.90),
    (54, "Xe", 131.29),
    (55, "Cs", 132.91),
    (56, "Ba", 137.33),
    (74, "W", 183.84),
    (75, "Re", 186.21),
    (76, "Os", 190.23),
    (77, "Ir", 192.22),
    (78, "Pt", 195.08),
    (79, "Au", 196.97),
    (80, "Hg", 200.59),
    (81, "Tl", 204.38),
    (82, "Pb", 207.2),
    (83, "Bi", 208.98),
    (92, "U", 238.03),
];

/// Atomic number for an element symbol (case-insensitive). None for symbols
/// outside the table.
pub fn symbol_to_z(symbol: &str) -> Option<u8> {
    let s = symbol.trim();
    TABLE
        .iter()
        .find(|(_, sym, _)| sym.eq_ignore_ascii_case(s))
        .map(|(z, _, _)| *z)
}

/// Canonical symbol for an atomic number.
pub fn z_to_symbol(z: u8) -> Option<&'static str> {
    TABLE.iter().find(|(n, _, _)| *n == z).map(|(_, s, _)| *s)
}

/// Standard atomic weight. None for atomic numbers outside the table.
pub fn atomic_weight(z: u8) -> Option<f64> {
    TABLE.iter().find(|(n, _, _)| *n == z).map(|(_, _, w)| *w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_lookup_is_case_insensitive() {
        assert_eq!(symbol_to_z("C"), Some(6));
        assert_eq!(symbol_to_z("c"), Some(6));
        assert_eq!(symbol_to_z("CL"), Some(17));
        assert_eq!(symbol_to_z("Cl"), Some(17));
        assert_eq!(symbol_to_z("Xx"), None);
    }

    #[test]
    fn weights_match_common_molecules() {
        // methane and ethanol from summed standard weights
        let mw_methane = atomic_weight(6).unwrap() + 4.0 * atomic_weight(1).unwrap();
        assert!((mw_methane - 16.043).abs() < 0.01);
        let mw_ethanol =
            2.0 * atomic_weight(6).unwrap() + 6.0 * atomic_weight(1).unwrap() + atomic_weight(8).unwrap();
        assert!((mw_ethanol - 46.069).abs() < 0.01);
    }

    #[test]
    fn round_trip_symbols() {
        for &(z, sym, _) in TABLE {
            assert_eq!(symbol_to_z(sym), Some(z));
            assert_eq!(z_to_symbol(z), Some(sym));
        }
    }
}
