//! Balanced multiport detector network.
//!
//! The network routes N = 2^L cavity outputs to N detectors through a
//! log-depth balanced beam-splitter tree. Its transfer matrix is built by the
//! doubling recursion A ↦ [[A, A], [A, −A]] starting from the 1×1 identity,
//! so every entry is ±1/√N and detector modes â_i = Σ_j A_{ij} ĉ_j / √N form
//! an orthonormal set. Which detector clicks carries no information about
//! which node emitted; only the sign pattern of a row survives into the
//! heralded state.

use super::{Result, SeedingError};

/// Largest supported recursion depth (32 ports). Trajectory simulation stops
/// well before this; the cap only guards the combinatorial helpers.
pub const MAX_NETWORK_LEVEL: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorNetwork {
    level: u32,
    n: usize,
    signs: Vec<i8>,
}

impl DetectorNetwork {
    /// Build the depth-`level` network on 2^level ports.
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_NETWORK_LEVEL {
            return Err(SeedingError::NetworkTooLarge { level, max: MAX_NETWORK_LEVEL });
        }
        let mut n = 1usize;
        let mut signs = vec![1i8];
        for _ in 0..level {
            let m = 2 * n;
            let mut next = vec![0i8; m * m];
            for i in 0..n {
                for j in 0..n {
                    let s = signs[i * n + j];
                    next[i * m + j] = s;
                    next[i * m + (j + n)] = s;
                    next[(i + n) * m + j] = s;
                    next[(i + n) * m + (j + n)] = -s;
                }
            }
            n = m;
            signs = next;
        }
        Ok(DetectorNetwork { level, n, signs })
    }

    /// Network for an `n`-node register; `n` must be a power of two.
    pub fn for_nodes(n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n == 0 {
            return Err(SeedingError::BadNodeCount { n, max: 1 << MAX_NETWORK_LEVEL });
        }
        Self::new(n.trailing_zeros())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of ports (= detectors = nodes).
    pub fn ports(&self) -> usize {
        self.n
    }

    /// Unnormalized entry A_{ij} ∈ {+1, −1}.
    pub fn sign(&self, i: usize, j: usize) -> i64 {
        self.signs[i * self.n + j] as i64
    }

    /// Mode coefficient A_{ij}/√N of node j in detector mode i.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.sign(i, j) as f64 / (self.n as f64).sqrt()
    }

    /// One row of signs (detector mode i across nodes).
    pub fn row(&self, i: usize) -> &[i8] {
        &self.signs[i * self.n..(i + 1) * self.n]
    }

    /// Exact permanent of the ±1 submatrix `rows × cols` (multisets allowed).
    ///
    /// Click patterns enter heralded amplitudes through permanents of network
    /// submatrices; with ±1 entries these are integers, so the expansion is
    /// exact. Square up to 20×20 (|permanent| ≤ 20! fits an i64); the protocol
    /// never needs more than (ports − 1).
    pub fn submatrix_permanent(&self, rows: &[usize], cols: &[usize]) -> Result<i64> {
        if rows.len() != cols.len() {
            return Err(SeedingError::InvariantViolation(format!(
                "permanent needs a square submatrix, got {}x{}",
                rows.len(),
                cols.len()
            )));
        }
        if rows.len() > 20 {
            return Err(SeedingError::InvariantViolation(format!(
                "permanent of order {} would overflow exact integer arithmetic",
                rows.len()
            )));
        }
        for &r in rows.iter().chain(cols) {
            if r >= self.n {
                return Err(SeedingError::DetectorOutOfRange { detector: r, n: self.n });
            }
        }
        fn expand(net: &DetectorNetwork, rows: &[usize], cols: &[usize], used: u32, row: usize) -> i64 {
            if row == rows.len() {
                return 1;
            }
            let mut total = 0i64;
            for (c, &col) in cols.iter().enumerate() {
                if used & (1 << c) == 0 {
                    total += net.sign(rows[row], col)
                        * expand(net, rows, cols, used | (1 << c), row + 1);
                }
            }
            total
        }
        Ok(expand(self, rows, cols, 0, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_networks_match_the_recursion_base() {
        let a0 = DetectorNetwork::new(0).unwrap();
        assert_eq!(a0.ports(), 1);
        assert_eq!(a0.sign(0, 0), 1);

        let a1 = DetectorNetwork::new(1).unwrap();
        assert_eq!(a1.ports(), 2);
        assert_eq!(
            (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| a1.sign(i, j)).collect::<Vec<_>>(),
            vec![1, 1, 1, -1]
        );
    }

    #[test]
    fn four_port_row_two_is_the_alternating_row() {
        let a = DetectorNetwork::for_nodes(4).unwrap();
        let row: Vec<f64> = (0..4).map(|j| a.coefficient(1, j)).collect();
        for (got, want) in row.iter().zip([0.5, -0.5, 0.5, -0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn networks_are_symmetric_with_orthonormal_rows() {
        for level in 0..=MAX_NETWORK_LEVEL {
            let a = DetectorNetwork::new(level).unwrap();
            let n = a.ports();
            for i in 0..n {
                for k in 0..n {
                    assert_eq!(a.sign(i, k), a.sign(k, i));
                    let dot: f64 = (0..n).map(|j| a.coefficient(i, j) * a.coefficient(k, j)).sum();
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12, "rows {i},{k} at level {level}");
                }
            }
        }
    }

    #[test]
    fn entries_agree_with_the_bitwise_character_formula() {
        // Independent route: A_{ij} = (−1)^{popcount(i & j)}.
        for level in 0..=MAX_NETWORK_LEVEL {
            let a = DetectorNetwork::new(level).unwrap();
            for i in 0..a.ports() {
                for j in 0..a.ports() {
                    let expect = if (i & j).count_ones() % 2 == 0 { 1 } else { -1 };
                    assert_eq!(a.sign(i, j), expect);
                }
            }
        }
    }

    #[test]
    fn submatrix_permanents_match_the_generic_routine() {
        use num_complex::Complex64;

        let a = DetectorNetwork::for_nodes(8).unwrap();
        // Pseudo-random row/column picks, cross-checked against the generic
        // complex permanent wherever that one's size cap allows.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for size in 1..=6 {
            for _ in 0..8 {
                let rows: Vec<usize> = (0..size).map(|_| (next() % 8) as usize).collect();
                let cols: Vec<usize> = (0..size).map(|_| (next() % 8) as usize).collect();
                let exact = a.submatrix_permanent(&rows, &cols).unwrap();
                let dense: Vec<Complex64> = rows
                    .iter()
                    .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
                    .map(|(r, c)| Complex64::new(a.sign(r, c) as f64, 0.0))
                    .collect();
                let generic = crate::hilbert::permanent(&dense, size).unwrap();
                assert!((generic.re - exact as f64).abs() < 1e-9);
                assert!(generic.im.abs() < 1e-12);
            }
        }
        // Repeated all-plus rows give a factorial.
        let perm = a.submatrix_permanent(&[0; 7], &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(perm, 5040);
    }

    #[test]
    fn submatrix_permanent_rejects_bad_shapes() {
        let a = DetectorNetwork::for_nodes(4).unwrap();
        assert!(a.submatrix_permanent(&[0, 1], &[0]).is_err());
        assert!(a.submatrix_permanent(&[0, 9], &[0, 1]).is_err());
    }

    #[test]
    fn oversized_levels_are_refused() {
        assert!(matches!(
            DetectorNetwork::new(MAX_NETWORK_LEVEL + 1),
            Err(SeedingError::NetworkTooLarge { .. })
        ));
        assert!(matches!(DetectorNetwork::for_nodes(3), Err(SeedingError::BadNodeCount { .. })));
    }
}
