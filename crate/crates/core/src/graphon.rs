//! Graphons on (0, 1]² and their discretization onto uniform grids.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, StepProfile, DEFAULT_MAX_CELLS};

/// Midpoint sub-samples per axis used when averaging an analytic kernel over
/// one grid cell.
pub const DEFAULT_QUADRATURE_ORDER: usize = 4;

/// A graphon that is constant on each rectangle `cell(i) × cell(j)` of the
/// uniform `n`-cell grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepEnvelope", into = "StepEnvelope")]
pub struct StepGraphon {
    values: DMatrix<f64>,
}

/// JSON form of a step graphon: resolution plus row-major entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepEnvelope {
    pub n: usize,
    pub values: Vec<f64>,
}

impl TryFrom<StepEnvelope> for StepGraphon {
    type Error = Error;

    fn try_from(env: StepEnvelope) -> Result<Self> {
        StepGraphon::from_row_major(env.n, &env.values)
    }
}

impl From<StepGraphon> for StepEnvelope {
    fn from(w: StepGraphon) -> Self {
        StepEnvelope {
            n: w.n(),
            values: w.row_major(),
        }
    }
}

impl StepGraphon {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.nrows() != values.ncols() {
            return Err(Error::InvalidParameter(format!(
                "step graphon must be a non-empty square matrix, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        index: i * values.ncols() + j,
                        value: v,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_row_major(n: usize, values: &[f64]) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::Format(format!(
                "expected {} entries for a {n}-step graphon, got {}",
                n * n,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format(
                "step graphon rows must form a square matrix".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(n, &flat)
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n, n, c))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n()).expect("step graphon is non-empty")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.values.transpose().as_slice().to_vec()
    }

    pub fn evaluate(&self, t: f64, s: f64) -> f64 {
        let g = self.grid();
        self.values[(g.cell_of(t), g.cell_of(s))]
    }

    pub fn max_entry(&self) -> f64 {
        self.values.max()
    }

    /// Exact re-expression on a grid whose resolution is a multiple of `n`.
    pub fn refine(&self, n_cells: usize) -> Result<Self> {
        let n = self.n();
        if n_cells == 0 || !n_cells.is_multiple_of(n) {
            return Err(Error::NotADivisor {
                size: n,
                reference: n_cells,
            });
        }
        let r = n_cells / n;
        Ok(Self {
            values: DMatrix::from_fn(n_cells, n_cells, |i, j| self.values[(i / r, j / r)]),
        })
    }
}

/// A graphon `W : (0,1]² → [0,1]`, either from a built-in analytic family or
/// given as a step graphon. Kernels need not be symmetric.
///
/// Serialized as `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphonDescriptor", into = "GraphonDescriptor")]
pub enum Graphon {
    /// `W ≡ c`.
    Constant(f64),
    /// `W(t,s) = t^α s^(1−α)`.
    SeparablePower(f64),
    /// `W(t,s) = t s`.
    Product,
    /// Stochastic block model: community `k` occupies an interval of length
    /// `sizes[k]`, laid out left to right.
    Block {
        sizes: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Step(StepGraphon),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum GraphonDescriptor {
    Constant {
        c: f64,
    },
    SeparablePower {
        alpha: f64,
    },
    Product {},
    Block {
        sizes: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Step(StepEnvelope),
}

impl TryFrom<GraphonDescriptor> for Graphon {
    type Error = Error;

    fn try_from(d: GraphonDescriptor) -> Result<Self> {
        match d {
            GraphonDescriptor::Constant { c } => Graphon::constant(c),
            GraphonDescriptor::SeparablePower { alpha } => Graphon::separable_power(alpha),
            GraphonDescriptor::Product {} => Ok(Graphon::Product),
            GraphonDescriptor::Block { sizes, values } => Graphon::block(sizes, values),
            GraphonDescriptor::Step(env) => Ok(Graphon::Step(env.try_into()?)),
        }
    }
}

impl From<Graphon> for GraphonDescriptor {
    fn from(w: Graphon) -> Self {
        match w {
            Graphon::Constant(c) => GraphonDescriptor::Constant { c },
            Graphon::SeparablePower(alpha) => GraphonDescriptor::SeparablePower { alpha },
            Graphon::Product => GraphonDescriptor::Product {},
            Graphon::Block { sizes, values } => GraphonDescriptor::Block { sizes, values },
            Graphon::Step(s) => GraphonDescriptor::Step(s.into()),
        }
    }
}

impl From<StepGraphon> for Graphon {
    fn from(w: StepGraphon) -> Self {
        Graphon::Step(w)
    }
}

impl Graphon {
    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!(
                "constant graphon value {c} not in [0,1]"
            )));
        }
        Ok(Graphon::Constant(c))
    }

    pub fn separable_power(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "exponent alpha = {alpha} not in [0,1]"
            )));
        }
        Ok(Graphon::SeparablePower(alpha))
    }

    pub fn block(sizes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let k = sizes.len();
        if k == 0 || values.len() != k || values.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter(
                "block model needs k community sizes and a k x k block matrix".into(),
            ));
        }
        if sizes.iter().any(|&s| !(s > 0.0)) || (sizes.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "community sizes must be positive and sum to 1".into(),
            ));
        }
        if let Some(v) = values.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "block value {v} not in [0,1]"
            )));
        }
        Ok(Graphon::Block { sizes, values })
    }

    pub fn evaluate(&self, t: f64, s: f64) -> f64 {
        match self {
            Graphon::Constant(c) => *c,
            Graphon::SeparablePower(alpha) => t.powf(*alpha) * s.powf(1.0 - alpha),
            Graphon::Product => t * s,
            Graphon::Block { sizes, values } => {
                let breaks = breakpoints(sizes);
                values[piece_of(&breaks, t)][piece_of(&breaks, s)]
            }
            Graphon::Step(w) => w.evaluate(t, s),
        }
    }

    /// `‖W‖∞`, exact for every built-in family.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Graphon::Constant(c) => *c,
            Graphon::SeparablePower(_) | Graphon::Product => 1.0,
            Graphon::Block { values, .. } => values.iter().flatten().copied().fold(0.0, f64::max),
            Graphon::Step(w) => w.max_entry(),
        }
    }

    /// Resolution of the step representation, if this is a step graphon.
    pub fn step_resolution(&self) -> Option<usize> {
        match self {
            Graphon::Step(w) => Some(w.n()),
            _ => None,
        }
    }
}

fn breakpoints(sizes: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(sizes.len() + 1);
    out.push(0.0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    // sizes sum to 1 only up to rounding
    *out.last_mut().unwrap() = 1.0;
    out
}

fn piece_of(breaks: &[f64], t: f64) -> usize {
    let pieces = breaks.len() - 1;
    (1..=pieces).find(|&p| t <= breaks[p]).unwrap_or(pieces) - 1
}

/// Fraction of uniform cell `i` of `n` covered by each piece of a partition of
/// (0,1] with the given breakpoints; rows sum to one.
fn overlap_weights(breaks: &[f64], n: usize) -> DMatrix<f64> {
    let pieces = breaks.len() - 1;
    DMatrix::from_fn(n, pieces, |i, p| {
        let lo = (i as f64 / n as f64).max(breaks[p]);
        let hi = ((i + 1) as f64 / n as f64).min(breaks[p + 1]);
        (hi - lo).max(0.0) * n as f64
    })
}

fn clamp_unit(m: DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.clamp(0.0, 1.0))
}

/// The `n`-step graphon whose entry `(i,j)` is the average of `W` over
/// `cell(i) × cell(j)`, using the default quadrature order.
pub fn step_approximation(w: &Graphon, n: usize) -> Result<StepGraphon> {
    step_approximation_with_order(w, n, DEFAULT_QUADRATURE_ORDER)
}

/// As [`step_approximation`], with `order × order` midpoint sub-samples per
/// cell for analytic kernels. Piecewise-constant inputs are averaged exactly.
pub fn step_approximation_with_order(w: &Graphon, n: usize, order: usize) -> Result<StepGraphon> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "step approximation needs n >= 1".into(),
        ));
    }
    if order == 0 {
        return Err(Error::InvalidParameter(
            "quadrature order must be >= 1".into(),
        ));
    }
    match w {
        Graphon::Step(step) => {
            let k = step.n();
            if k == n {
                Ok(step.clone())
            } else if n.is_multiple_of(k) {
                step.refine(n)
            } else {
                let breaks: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
                let p = overlap_weights(&breaks, n);
                StepGraphon::new(clamp_unit(&p * step.matrix() * p.transpose()))
            }
        }
        Graphon::Block { sizes, values } => {
            let k = sizes.len();
            let b = DMatrix::from_fn(k, k, |i, j| values[i][j]);
            let p = overlap_weights(&breakpoints(sizes), n);
            StepGraphon::new(clamp_unit(&p * b * p.transpose()))
        }
        Graphon::Constant(c) => StepGraphon::constant(n, *c),
        _ => {
            let h = 1.0 / (n * order) as f64;
            let sub: Vec<f64> = (0..n * order).map(|k| (k as f64 + 0.5) * h).collect();
            let norm = (order * order) as f64;
            let m = DMatrix::from_fn(n, n, |i, j| {
                let mut acc = 0.0;
                for &t in &sub[i * order..(i + 1) * order] {
                    for &s in &sub[j * order..(j + 1) * order] {
                        acc += w.evaluate(t, s);
                    }
                }
                acc / norm
            });
            StepGraphon::new(clamp_unit(m))
        }
    }
}

/// Cell quadrature `e_i = (Σ_j K(i,j) f_j) / N`, summing over `j` in
/// increasing order. Every aggregate in the crate, network or graphon, goes
/// through this function so that the two agree bit for bit.
pub fn apply_kernel(kernel: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert_eq!(kernel.ncols(), n, "kernel and profile resolutions differ");
    let mut acc = vec![0.0; kernel.nrows()];
    for (j, &fj) in f.iter().enumerate() {
        for (a, &k) in acc.iter_mut().zip(kernel.column(j).iter()) {
            *a += k * fj;
        }
    }
    let n = n as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Local aggregate `∫ W(t,s) f(s) dμ(s)` for a step graphon and a profile on
/// the same grid. No discretization error.
pub fn local_aggregate_step(w: &StepGraphon, f: &StepProfile) -> Result<StepProfile> {
    if w.n() != f.len() {
        return Err(Error::IncompatibleGrids {
            left: w.n(),
            right: f.len(),
            max_cells: f.len().max(w.n()),
        });
    }
    StepProfile::new(apply_kernel(w.matrix(), f.values()))
}

/// Local aggregate `∫ W(t,s) f(s) dμ(s)` as a step profile.
///
/// Step graphons and profiles of different resolution are both refined to
/// their common grid (at most [`DEFAULT_MAX_CELLS`] cells). Analytic kernels
/// are step-approximated at the profile's resolution.
pub fn local_aggregate(w: &Graphon, f: &StepProfile) -> Result<StepProfile> {
    match w {
        Graphon::Step(step) => {
            let grid = step
                .grid()
                .common_refinement(&f.grid(), DEFAULT_MAX_CELLS)?;
            let n = grid.n_cells();
            if n == step.n() && n == f.len() {
                local_aggregate_step(step, f)
            } else {
                local_aggregate_step(&step.refine(n)?, &f.refine(n)?)
            }
        }
        _ => local_aggregate_step(&step_approximation(w, f.len())?, f),
    }
}

/// `(A · B) / N`: the quadrature of `∫ A(t,x) B(x,s) dx` on an `N`-cell grid.
pub fn kernel_compose(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols() as f64;
    let mut out = a * b;
    out /= n;
    out
}

/// The `n`-th iterated kernel `W_n` at the given grid resolution:
/// `W_1 = W̄`, `W_n = (W̄ · W_{n−1}) / N`.
pub fn iterated_kernel(w: &Graphon, n: usize, grid: GridSpec) -> Result<StepGraphon> {
    iterated_kernel_with_order(w, n, grid, DEFAULT_QUADRATURE_ORDER)
}

/// As [`iterated_kernel`] with an explicit per-cell quadrature order. Order 1
/// samples `W` at cell midpoints (the Nyström discretization).
pub fn iterated_kernel_with_order(
    w: &Graphon,
    n: usize,
    grid: GridSpec,
    order: usize,
) -> Result<StepGraphon> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "iterated kernel order must be >= 1".into(),
        ));
    }
    let base = step_approximation_with_order(w, grid.n_cells(), order)?;
    let mut current = base.matrix().clone();
    for _ in 1..n {
        current = kernel_compose(base.matrix(), &current);
    }
    Ok(StepGraphon { values: current })
}

/// L1 distance `∫∫ |W − W̃|` between a graphon and a step graphon.
///
/// Exact when `W` is itself a step graphon on a compatible grid; otherwise each
/// cell of `approx` is sampled on a `samples × samples` midpoint lattice.
pub fn l1_distance(w: &Graphon, approx: &StepGraphon, samples: usize) -> Result<f64> {
    if let Graphon::Step(step) = w {
        if let Ok(grid) = step
            .grid()
            .common_refinement(&approx.grid(), DEFAULT_MAX_CELLS)
        {
            let n = grid.n_cells();
            let a = step.refine(n)?;
            let b = approx.refine(n)?;
            let total: f64 = (a.matrix() - b.matrix()).abs().sum();
            return Ok(total / (n * n) as f64);
        }
    }
    let samples = samples.max(1);
    let n = approx.n();
    let h = 1.0 / (n * samples) as f64;
    let mut total = 0.0;
    for i in 0..n * samples {
        let t = (i as f64 + 0.5) * h;
        for j in 0..n * samples {
            let s = (j as f64 + 0.5) * h;
            total += (w.evaluate(t, s) - approx.get(i / samples, j / samples)).abs();
        }
    }
    Ok(total * h * h)
}
