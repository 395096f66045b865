//! Dense state vectors over small mixed-radix Hilbert spaces.
//!
//! Every site carries its own level count (qubits, qutrits, or the six-level
//! cavity nodes used by the seeding protocol), so a basis configuration is a
//! digit string and the amplitude array is indexed mixed-radix with site 0 as
//! the most significant digit. Nothing here is sparse: the spaces we care
//! about top out at a few million amplitudes and dense arrays keep the
//! operator application loops simple and cache friendly.

use num_complex::Complex64;
use thiserror::Error;

mod permanent;

pub use permanent::{permanent, permanent_int, permanent_permutation_sum, permanent_ryser};

/// Largest matrix size accepted by [`permanent`].
pub const MAX_PERMANENT_SIZE: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum HilbertError {
    #[error("configuration has {got} digits but the layout has {expected} sites")]
    ConfigLength { expected: usize, got: usize },
    #[error("level {level} out of range for site {site} with {dim} levels")]
    LevelOutOfRange { site: usize, level: usize, dim: usize },
    #[error("site {site} out of range for a layout with {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("state vectors live on different layouts")]
    LayoutMismatch,
    #[error("operator matrix has {got} entries but the site span needs {expected}")]
    OperatorShape { expected: usize, got: usize },
    #[error("pair operator addresses site {site} twice")]
    DuplicatePairSite { site: usize },
    #[error("partition cell {cell} is empty")]
    EmptyPartitionCell { cell: usize },
    #[error("partition does not cover the levels of site {site} exactly once")]
    PartitionNotExhaustive { site: usize },
    #[error("cannot normalize a state with zero norm")]
    ZeroNorm,
    #[error("matrix has {got} entries, expected {expected} for size {n}")]
    MatrixShape { n: usize, expected: usize, got: usize },
    #[error("permanent only implemented up to size {max}, got {n}")]
    PermanentTooLarge { n: usize, max: usize },
}

type Result<T> = std::result::Result<T, HilbertError>;

/// Per-site level counts plus the mixed-radix strides derived from them.
///
/// Site 0 owns the most significant digit: for layout `[d0, d1, ...]` the
/// flat index of configuration `(c0, c1, ...)` is `((c0 * d1 + c1) * d2 + ...)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelLayout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl LevelLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "layout needs at least one site");
        assert!(dims.iter().all(|&d| d >= 1), "every site needs at least one level");
        let mut strides = vec![1usize; dims.len()];
        for site in (0..dims.len().saturating_sub(1)).rev() {
            strides[site] = strides[site + 1] * dims[site + 1];
        }
        let total = strides[0] * dims[0];
        LevelLayout { dims, strides, total }
    }

    /// Uniform layout: `sites` sites with `dim` levels each.
    pub fn uniform(sites: usize, dim: usize) -> Self {
        LevelLayout::new(vec![dim; sites])
    }

    pub fn sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Stride of `site` in the flat index (how far one level step moves).
    pub fn stride(&self, site: usize) -> usize {
        self.strides[site]
    }

    /// Total dimension of the tensor product space.
    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Flat index of a basis configuration.
    pub fn basis_index(&self, config: &[usize]) -> Result<usize> {
        if config.len() != self.dims.len() {
            return Err(HilbertError::ConfigLength { expected: self.dims.len(), got: config.len() });
        }
        let mut index = 0usize;
        for (site, (&level, &dim)) in config.iter().zip(&self.dims).enumerate() {
            if level >= dim {
                return Err(HilbertError::LevelOutOfRange { site, level, dim });
            }
            index += level * self.strides[site];
        }
        Ok(index)
    }

    /// Inverse of [`basis_index`](Self::basis_index).
    pub fn config_of(&self, mut index: usize) -> Vec<usize> {
        debug_assert!(index < self.total);
        let mut config = vec![0usize; self.dims.len()];
        for site in 0..self.dims.len() {
            config[site] = index / self.strides[site];
            index %= self.strides[site];
        }
        config
    }

    /// Level of `site` inside the flat `index` without decoding the rest.
    pub fn level_at(&self, index: usize, site: usize) -> usize {
        (index / self.strides[site]) % self.dims[site]
    }
}

/// Dense complex state vector over a [`LevelLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: LevelLayout,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All-zero vector (not a physical state until amplitudes are written).
    pub fn zero(layout: LevelLayout) -> Self {
        let amps = vec![Complex64::ZERO; layout.total_dim()];
        StateVector { layout, amps }
    }

    /// Unit basis vector for a configuration.
    pub fn basis(layout: LevelLayout, config: &[usize]) -> Result<Self> {
        let index = layout.basis_index(config)?;
        let mut state = StateVector::zero(layout);
        state.amps[index] = Complex64::ONE;
        Ok(state)
    }

    pub fn from_amplitudes(layout: LevelLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(HilbertError::OperatorShape { expected: layout.total_dim(), got: amps.len() });
        }
        Ok(StateVector { layout, amps })
    }

    pub fn layout(&self) -> &LevelLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn amplitude(&self, config: &[usize]) -> Result<Complex64> {
        Ok(self.amps[self.layout.basis_index(config)?])
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `⟨self|other⟩` with the left argument conjugated.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.layout != other.layout {
            return Err(HilbertError::LayoutMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Rescale to unit norm, failing on the zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(HilbertError::ZeroNorm);
        }
        let inv = 1.0 / n;
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }
}

/// `|⟨a|b⟩|²` for normalized arguments.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Operator acting on one site or an ordered pair of sites.
///
/// The matrix is dense, row major, in the site's level basis; for a pair the
/// combined basis orders the first site as the more significant digit, matching
/// the layout convention.
#[derive(Debug, Clone)]
pub enum LocalOperator {
    Single { site: usize, dim: usize, matrix: Vec<Complex64> },
    Pair { site_a: usize, site_b: usize, dim_a: usize, dim_b: usize, matrix: Vec<Complex64> },
}

impl LocalOperator {
    pub fn single(site: usize, dim: usize, matrix: Vec<Complex64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(HilbertError::OperatorShape { expected: dim * dim, got: matrix.len() });
        }
        Ok(LocalOperator::Single { site, dim, matrix })
    }

    pub fn pair(site_a: usize, site_b: usize, dim_a: usize, dim_b: usize, matrix: Vec<Complex64>) -> Result<Self> {
        if site_a == site_b {
            return Err(HilbertError::DuplicatePairSite { site: site_a });
        }
        let d = dim_a * dim_b;
        if matrix.len() != d * d {
            return Err(HilbertError::OperatorShape { expected: d * d, got: matrix.len() });
        }
        Ok(LocalOperator::Pair { site_a, site_b, dim_a, dim_b, matrix })
    }
}

/// Apply a local operator in place. The operator may be non-unitary (the
/// conditional-evolution maps used by the seeding engine shrink the norm).
pub fn apply_local(state: &mut StateVector, op: &LocalOperator) -> Result<()> {
    match op {
        LocalOperator::Single { site, dim, matrix } => {
            let layout = &state.layout;
            if *site >= layout.sites() {
                return Err(HilbertError::SiteOutOfRange { site: *site, sites: layout.sites() });
            }
            if layout.dim(*site) != *dim {
                return Err(HilbertError::OperatorShape {
                    expected: layout.dim(*site) * layout.dim(*site),
                    got: matrix.len(),
                });
            }
            let stride = layout.stride(*site);
            let d = *dim;
            let block = stride * d;
            let mut scratch = vec![Complex64::ZERO; d];
            let amps = &mut state.amps;
            // Walk every group of d amplitudes that differ only in this site's level.
            let mut base = 0;
            while base < amps.len() {
                for offset in 0..stride {
                    let start = base + offset;
                    for (row, s) in scratch.iter_mut().enumerate() {
                        let mut acc = Complex64::ZERO;
                        for col in 0..d {
                            acc += matrix[row * d + col] * amps[start + col * stride];
                        }
                        *s = acc;
                    }
                    for (row, s) in scratch.iter().enumerate() {
                        amps[start + row * stride] = *s;
                    }
                }
                base += block;
            }
            Ok(())
        }
        LocalOperator::Pair { site_a, site_b, dim_a, dim_b, matrix } => {
            let layout = &state.layout;
            for &site in [site_a, site_b].iter() {
                if *site >= layout.sites() {
                    return Err(HilbertError::SiteOutOfRange { site: *site, sites: layout.sites() });
                }
            }
            if layout.dim(*site_a) != *dim_a || layout.dim(*site_b) != *dim_b {
                let d = layout.dim(*site_a) * layout.dim(*site_b);
                return Err(HilbertError::OperatorShape { expected: d * d, got: matrix.len() });
            }
            let (da, db) = (*dim_a, *dim_b);
            let d = da * db;
            let (stride_a, stride_b) = (layout.stride(*site_a), layout.stride(*site_b));
            let mut scratch = vec![Complex64::ZERO; d];
            let total = layout.total_dim();
            let amps = &mut state.amps;
            // Enumerate base indices where both addressed sites sit at level 0.
            for index in 0..total {
                if layout.level_at(index, *site_a) != 0 || layout.level_at(index, *site_b) != 0 {
                    continue;
                }
                for (row, s) in scratch.iter_mut().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for col in 0..d {
                        let (ca, cb) = (col / db, col % db);
                        acc += matrix[row * d + col] * amps[index + ca * stride_a + cb * stride_b];
                    }
                    *s = acc;
                }
                for (row, s) in scratch.iter().enumerate() {
                    let (ra, rb) = (row / db, row % db);
                    amps[index + ra * stride_a + rb * stride_b] = *s;
                }
            }
            Ok(())
        }
    }
}

/// One branch of a projective measurement.
#[derive(Debug, Clone)]
pub struct MeasurementBranch {
    /// Index of the partition cell that fired.
    pub cell: usize,
    pub probability: f64,
    /// Normalized post-measurement state; zero vector when the branch has
    /// no support.
    pub post_state: StateVector,
}

/// Projectively measure one site against a partition of its levels.
///
/// Each cell of `partition` lists the levels collapsing to that outcome; the
/// cells must tile the site's levels exactly. Probabilities are returned in
/// cell order and sum to the squared norm of the input (1 for a normalized
/// state). Measuring in a rotated basis is done by applying the rotation with
/// [`apply_local`] first and partitioning levels afterwards.
pub fn measure_projective(
    state: &StateVector,
    site: usize,
    partition: &[Vec<usize>],
) -> Result<Vec<MeasurementBranch>> {
    let layout = &state.layout;
    if site >= layout.sites() {
        return Err(HilbertError::SiteOutOfRange { site, sites: layout.sites() });
    }
    let dim = layout.dim(site);
    let mut seen = vec![false; dim];
    for (cell, levels) in partition.iter().enumerate() {
        if levels.is_empty() {
            return Err(HilbertError::EmptyPartitionCell { cell });
        }
        for &level in levels {
            if level >= dim || seen[level] {
                return Err(HilbertError::PartitionNotExhaustive { site });
            }
            seen[level] = true;
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(HilbertError::PartitionNotExhaustive { site });
    }

    let mut cell_of_level = vec![0usize; dim];
    for (cell, levels) in partition.iter().enumerate() {
        for &level in levels {
            cell_of_level[level] = cell;
        }
    }

    let mut branches: Vec<MeasurementBranch> = partition
        .iter()
        .enumerate()
        .map(|(cell, _)| MeasurementBranch {
            cell,
            probability: 0.0,
            post_state: StateVector::zero(layout.clone()),
        })
        .collect();

    for (index, amp) in state.amps.iter().enumerate() {
        if *amp == Complex64::ZERO {
            continue;
        }
        let cell = cell_of_level[layout.level_at(index, site)];
        branches[cell].probability += amp.norm_sqr();
        branches[cell].post_state.amps[index] = *amp;
    }

    for branch in &mut branches {
        if branch.probability > 0.0 {
            let inv = 1.0 / branch.probability.sqrt();
            for a in &mut branch.post_state.amps {
                *a *= inv;
            }
        }
    }
    Ok(branches)
}
