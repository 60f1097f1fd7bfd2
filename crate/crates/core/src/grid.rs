//! Uniform partitions of the agent space (0, 1] and piecewise-constant
//! functions on them.
//!
//! Cell `i` (zero-based here) is the half-open interval `(i/N, (i+1)/N]`
//! with midpoint `(i + 1/2)/N` and measure `1/N`. Every integral in the
//! crate is a cell-average quadrature over such a grid, so step objects are
//! represented without discretization error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest resolution that mixed-resolution operations may refine to.
pub const DEFAULT_MAX_CELLS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n_cells: usize,
}

impl GridSpec {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one cell".into(),
            ));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) / self.n_cells as f64
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.midpoint(i))
    }

    /// Zero-based index of the cell containing `t`. Points at or below 0 map
    /// to the first cell and points above 1 to the last.
    pub fn cell_of(&self, t: f64) -> usize {
        let n = self.n_cells as f64;
        let mut k = (t * n).ceil();
        // t * n can round up past an exact boundary i/N
        if k >= 1.0 && (k - 1.0) / n >= t {
            k -= 1.0;
        }
        (k.max(1.0).min(n) as usize) - 1
    }

    /// Least common multiple of the two resolutions, if it does not exceed
    /// `max_cells`.
    pub fn common_refinement(&self, other: &GridSpec, max_cells: usize) -> Result<GridSpec> {
        let lcm = lcm(self.n_cells, other.n_cells);
        match lcm {
            Some(n) if n <= max_cells => GridSpec::new(n),
            _ => Err(Error::IncompatibleGrids {
                left: self.n_cells,
                right: other.n_cells,
                max_cells,
            }),
        }
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: usize, b: usize) -> Option<usize> {
    (a / gcd(a, b)).checked_mul(b)
}

/// A real-valued function that is constant on each cell of a uniform grid.
///
/// Used for strategy profiles, source functions, aggregates, regrets and
/// per-agent utility parameters alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    values: Vec<f64>,
}

impl StepProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "step profile needs at least one cell".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; grid.n_cells()],
        }
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.midpoints().map(f).collect(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            n_cells: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.values[self.grid().cell_of(t)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Checks every value against `[lo, hi]`.
    pub fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        match self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= lo && **v <= hi))
        {
            Some((index, &value)) => Err(Error::OutOfRange {
                index,
                value,
                lo,
                hi,
            }),
            None => Ok(()),
        }
    }

    /// Re-expresses the profile on a finer grid whose resolution is a
    /// multiple of the current one. Exact.
    pub fn refine(&self, n_cells: usize) -> Result<Self> {
        let n = self.len();
        if n_cells == 0 || !n_cells.is_multiple_of(n) {
            return Err(Error::NotADivisor {
                size: n,
                reference: n_cells,
            });
        }
        let r = n_cells / n;
        Ok(Self {
            values: self
                .values
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, r))
                .collect(),
        })
    }

    /// Interval averaging onto the coarser `n_cells` partition; `n_cells`
    /// must divide the current resolution.
    pub fn average_to(&self, n_cells: usize) -> Result<Self> {
        let n = self.len();
        if n_cells == 0 || !n.is_multiple_of(n_cells) {
            return Err(Error::NotADivisor {
                size: n_cells,
                reference: n,
            });
        }
        let r = n / n_cells;
        Ok(Self {
            values: self
                .values
                .chunks(r)
                .map(|c| c.iter().sum::<f64>() / r as f64)
                .collect(),
        })
    }

    /// Brings two profiles onto their common refinement.
    pub fn align(&self, other: &StepProfile, max_cells: usize) -> Result<(Self, Self)> {
        let grid = self.grid().common_refinement(&other.grid(), max_cells)?;
        Ok((self.refine(grid.n_cells())?, other.refine(grid.n_cells())?))
    }

    /// `∫ f dμ` under the uniform measure.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }
}

impl std::ops::Index<usize> for StepProfile {
    type Output = f64;

    fn index(&self, cell: usize) -> &f64 {
        &self.values[cell]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_partition_unit_interval() {
        let g = GridSpec::new(7).unwrap();
        let total: f64 = (0..7).map(|_| g.cell_measure()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(GridSpec::new(0).is_err());
    }

    #[test]
    fn cell_lookup_respects_half_open_cells() {
        let g = GridSpec::new(2).unwrap();
        assert_eq!(g.cell_of(0.4), 0);
        assert_eq!(g.cell_of(0.5), 0);
        assert_eq!(g.cell_of(0.5000001), 1);
        assert_eq!(g.cell_of(1.0), 1);
        let g10 = GridSpec::new(10).unwrap();
        // 0.3 * 10 rounds to 3.0000000000000004
        assert_eq!(g10.cell_of(0.3), 2);
        assert_eq!(g10.cell_of(0.0), 0);
    }

    #[test]
    fn refinement_and_averaging_round_trip() {
        let f = StepProfile::new(vec![1.0, 2.0, 4.0]).unwrap();
        let fine = f.refine(12).unwrap();
        assert_eq!(fine.len(), 12);
        assert_eq!(fine.average_to(3).unwrap(), f);
        assert!(f.refine(8).is_err());
        assert!(fine.average_to(5).is_err());
    }

    #[test]
    fn common_refinement_is_lcm_with_cap() {
        let a = GridSpec::new(4).unwrap();
        let b = GridSpec::new(6).unwrap();
        assert_eq!(a.common_refinement(&b, 8192).unwrap().n_cells(), 12);
        assert!(matches!(
            a.common_refinement(&b, 10),
            Err(Error::IncompatibleGrids { .. })
        ));
    }

    #[test]
    fn range_check_reports_offending_cell() {
        let f = StepProfile::new(vec![0.0, 0.5, 1.5]).unwrap();
        match f.check_range(0.0, 1.0) {
            Err(Error::OutOfRange { index, value, .. }) => {
                assert_eq!(index, 2);
                assert_eq!(value, 1.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(f.map(|v| v / 2.0).check_range(0.0, 1.0).is_ok());
    }
}
