//! Measure representations, distances, push-forwards and sampling.
//!
//! Five concrete families share the [`Measure`] enum: one-dimensional
//! measures given by their quantile function, centered Gaussians, products,
//! uniform discrete measures, and grid densities on a compact window.
//! Distances are exact per family; cross-family pairs are resolved by a
//! documented conversion to discrete measures.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::transport::TransportMap;

/// Default number of quantile grid points, with midpoint levels (i+1/2)/M.
pub const DEFAULT_QUANTILE_GRID: usize = 1024;

/// Default number of support points when converting a measure to a discrete
/// one for cross-family distances.
pub const CROSS_FAMILY_RESOLUTION: usize = 512;

/// Seed used for the deterministic sampling step of cross-family
/// conversions.
const CROSS_FAMILY_SEED: u64 = 0x5747_4153;

/// Axis-aligned box window K = Π [lowerₖ, upperₖ].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compactum {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Compactum {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Shape(format!(
                "window bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::Domain(format!(
                    "window requires lower < upper on every axis, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Diameter d_K of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Sub-box shrunk by `frac` of the side length per side, Ω ⊂ int(K).
    pub fn shrink(&self, frac: f64) -> Compactum {
        let lower = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + frac * (u - l))
            .collect();
        let upper = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - frac * (u - l))
            .collect();
        Compactum { lower, upper }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

/// How the sorted value vector of a [`Measure1D`] is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr1D {
    /// Values are the quantile function at midpoint levels (i+1/2)/M;
    /// `quantile` interpolates linearly between them.
    QuantileGrid,
    /// Values are atoms with equal weights; the quantile function is the
    /// order-statistic step function.
    Sample,
}

/// One-dimensional measure stored through its quantile function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure1D {
    values: Vec<f64>,
    repr: Repr1D,
}

impl Measure1D {
    pub fn from_quantiles(values: Vec<f64>) -> Result<Self> {
        Self::validate(&values)?;
        Ok(Self {
            values,
            repr: Repr1D::QuantileGrid,
        })
    }

    /// Build from an unsorted sample of equally weighted atoms.
    pub fn from_sample(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self::validate(&values)?;
        Ok(Self {
            values,
            repr: Repr1D::Sample,
        })
    }

    /// Discretize a quantile function onto the default midpoint grid.
    pub fn from_quantile_fn(f: impl Fn(f64) -> f64, m: usize) -> Result<Self> {
        let values = (0..m)
            .map(|i| f((i as f64 + 0.5) / m as f64))
            .collect::<Vec<_>>();
        Self::from_quantiles(values)
    }

    pub fn point_mass(c: f64) -> Self {
        Self {
            values: vec![c],
            repr: Repr1D::QuantileGrid,
        }
    }

    fn validate(values: &[f64]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Domain("1D measure needs at least one value".into()));
        }
        for w in values.windows(2) {
            if !(w[0] <= w[1]) {
                return Err(Error::Domain(
                    "quantile values must be nondecreasing and finite".into(),
                ));
            }
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("quantile values must be finite".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn repr(&self) -> Repr1D {
        self.repr
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quantile G⁻¹(q) for q ∈ (0,1).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level {q} outside (0,1)")));
        }
        Ok(self.quantile_unchecked(q))
    }

    pub(crate) fn quantile_unchecked(&self, q: f64) -> f64 {
        let m = self.values.len();
        match self.repr {
            Repr1D::QuantileGrid => {
                // linear interpolation on midpoint levels, constant tails
                let t = q * m as f64 - 0.5;
                if t <= 0.0 {
                    return self.values[0];
                }
                let i = t.floor() as usize;
                if i + 1 >= m {
                    return self.values[m - 1];
                }
                let frac = t - i as f64;
                self.values[i] + frac * (self.values[i + 1] - self.values[i])
            }
            Repr1D::Sample => {
                // order statistic: value on ((i)/m, (i+1)/m]
                let i = (q * m as f64).ceil() as usize;
                self.values[i.clamp(1, m) - 1]
            }
        }
    }

    /// Interior breakpoints of the (piecewise linear or step) quantile
    /// function, as levels in (0,1).
    fn quantile_breakpoints(&self) -> Vec<f64> {
        let m = self.values.len();
        match self.repr {
            Repr1D::QuantileGrid => (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect(),
            Repr1D::Sample => (1..m).map(|i| i as f64 / m as f64).collect(),
        }
    }

    /// Exact squared L²(0,1) distance between two quantile functions.
    ///
    /// Both functions are piecewise linear between the union of their
    /// breakpoints, so a two-point reconstruction per subinterval makes the
    /// quadrature exact.
    pub fn quantile_l2_sq(&self, other: &Measure1D) -> f64 {
        if self.repr == Repr1D::QuantileGrid
            && other.repr == Repr1D::QuantileGrid
            && self.len() == other.len()
        {
            // shared midpoint grid: exact optimal coupling of the atoms
            let m = self.len() as f64;
            return self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / m;
        }
        let mut knots: Vec<f64> = vec![0.0, 1.0];
        knots.extend(self.quantile_breakpoints());
        knots.extend(other.quantile_breakpoints());
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            if h <= 0.0 {
                continue;
            }
            // sample strictly inside, where both pieces are linear
            let t1 = a + 0.25 * h;
            let t2 = a + 0.75 * h;
            let d1 = self.quantile_unchecked(t1) - other.quantile_unchecked(t1);
            let d2 = self.quantile_unchecked(t2) - other.quantile_unchecked(t2);
            // integrate the square of the line through (t1,d1),(t2,d2)
            let slope = (d2 - d1) / (t2 - t1);
            let at_a = d1 + slope * (a - t1);
            let at_b = d1 + slope * (b - t1);
            total += h * (at_a * at_a + at_a * at_b + at_b * at_b) / 3.0;
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Centered Gaussian measure N(0, S).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    covariance: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Covariance inputs are symmetrized as (S+Sᵀ)/2 before validation.
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        let sym = linalg::symmetrize(&covariance);
        let asym = (&covariance - &sym).abs().max();
        if asym > 1e-10 * (1.0 + covariance.abs().max()) {
            return Err(Error::Domain(format!(
                "covariance asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        linalg::validate_spd(&sym, "Gaussian covariance")?;
        Ok(Self { covariance: sym })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            covariance: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Squared Bures-Wasserstein distance
    /// d² = tr S₁ + tr S₂ − 2 tr[(S₂^{1/2} S₁ S₂^{1/2})^{1/2}].
    pub fn wasserstein2_sq(&self, other: &GaussianMeasure) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "Gaussian dimensions {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let r2 = linalg::matrix_sqrt_spd(&other.covariance)?;
        let inner = &r2 * &self.covariance * &r2;
        let cross = linalg::matrix_sqrt_spd(&inner)?;
        let d2 = self.covariance.trace() + other.covariance.trace() - 2.0 * cross.trace();
        Ok(d2.max(0.0))
    }
}

/// Product measure μ₁ ⊗ ... ⊗ μ_k of arbitrary factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    factors: Vec<Measure>,
}

impl ProductMeasure {
    pub fn new(factors: Vec<Measure>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Domain("product measure needs ≥1 factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Measure] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).sum()
    }
}

/// Measure uniform (or weighted, after collision merging) on finitely many
/// support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Uniform measure on distinct points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.len();
        if m == 0 {
            return Err(Error::Domain("discrete measure needs ≥1 point".into()));
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(Error::Shape("support points differ in dimension".into()));
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if points[i] == points[j] {
                    return Err(Error::Domain(format!(
                        "support points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
            points,
        })
    }

    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Shape("points/weights length mismatch".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("weights must be nonnegative, sum 1".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() < 1e-12)
    }
}

/// Piecewise-constant density on a regular grid over a box window.
/// The mass of a cell is value × cell volume (midpoint rule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    window: Compactum,
    cells_per_axis: Vec<usize>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(window: Compactum, cells_per_axis: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if cells_per_axis.len() != window.dim() || cells_per_axis.iter().any(|&c| c == 0) {
            return Err(Error::Shape("cells_per_axis must match window dim".into()));
        }
        let n: usize = cells_per_axis.iter().product();
        if values.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} cell values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("density values must be ≥ 0".into()));
        }
        let g = Self {
            window,
            cells_per_axis,
            values,
        };
        let mass = g.total_mass();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "cell-weighted sum is {mass}, expected 1"
            )));
        }
        Ok(g)
    }

    /// Evaluate a (not necessarily normalized) density at cell centers and
    /// normalize to total mass one.
    pub fn from_fn(
        window: Compactum,
        cells_per_axis: Vec<usize>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let n: usize = cells_per_axis.iter().product();
        let tmp = Self {
            window,
            cells_per_axis,
            values: vec![0.0; n],
        };
        let mut values = Vec::with_capacity(n);
        for idx in 0..n {
            let c = tmp.cell_center(idx);
            let v = f(&c);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Domain("density function must be ≥ 0".into()));
            }
            values.push(v);
        }
        let vol = tmp.cell_volume();
        let mass: f64 = values.iter().sum::<f64>() * vol;
        if mass <= 0.0 {
            return Err(Error::Domain("density is identically zero".into()));
        }
        for v in &mut values {
            *v /= mass;
        }
        Self::new(tmp.window, tmp.cells_per_axis, values)
    }

    pub fn uniform(window: Compactum, cells_per_axis: Vec<usize>) -> Self {
        let n: usize = cells_per_axis.iter().product();
        let v = 1.0 / window.volume();
        Self {
            window,
            cells_per_axis,
            values: vec![v; n],
        }
    }

    pub fn window(&self) -> &Compactum {
        &self.window
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.window.volume() / self.n_cells() as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn sup_density(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Multi-index of a flat cell index (row-major, last axis fastest).
    pub fn cell_multi_index(&self, mut idx: usize) -> Vec<usize> {
        let d = self.dim();
        let mut mi = vec![0usize; d];
        for k in (0..d).rev() {
            mi[k] = idx % self.cells_per_axis[k];
            idx /= self.cells_per_axis[k];
        }
        mi
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let mi = self.cell_multi_index(idx);
        mi.iter()
            .enumerate()
            .map(|(k, &i)| {
                let w = (self.window.upper[k] - self.window.lower[k])
                    / self.cells_per_axis[k] as f64;
                self.window.lower[k] + (i as f64 + 0.5) * w
            })
            .collect()
    }

    /// Flat index of the cell containing a point (clamped to the window).
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for k in 0..self.dim() {
            let w =
                (self.window.upper[k] - self.window.lower[k]) / self.cells_per_axis[k] as f64;
            let mut i = ((x[k] - self.window.lower[k]) / w).floor() as isize;
            i = i.clamp(0, self.cells_per_axis[k] as isize - 1);
            idx = idx * self.cells_per_axis[k] + i as usize;
        }
        idx
    }

    /// Quantile-grid view of a one-dimensional grid density, by inverting
    /// its piecewise-linear CDF at midpoint levels.
    pub fn to_measure1d(&self, m: usize) -> Result<Measure1D> {
        if self.dim() != 1 {
            return Err(Error::Representation(
                "quantile view requires a 1-dimensional grid".into(),
            ));
        }
        let n = self.n_cells();
        let vol = self.cell_volume();
        // cdf at cell right edges
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for v in &self.values {
            acc += v * vol;
            cdf.push(acc);
        }
        let last = *cdf.last().unwrap();
        for c in &mut cdf {
            *c /= last;
        }
        let lo = self.window.lower[0];
        let width = (self.window.upper[0] - self.window.lower[0]) / n as f64;
        let mut values = Vec::with_capacity(m);
        let mut cell = 0usize;
        for i in 0..m {
            let q = (i as f64 + 0.5) / m as f64;
            while cell + 1 < n && cdf[cell + 1] < q {
                cell += 1;
            }
            let mass = cdf[cell + 1] - cdf[cell];
            let frac = if mass > 0.0 {
                ((q - cdf[cell]) / mass).clamp(0.0, 1.0)
            } else {
                0.5
            };
            values.push(lo + (cell as f64 + frac) * width);
        }
        Measure1D::from_quantiles(values)
    }

    /// Rebuild a 1D grid density from a quantile grid: atoms are binned
    /// into cells and converted back to a piecewise-constant density.
    pub fn from_measure1d(
        m1: &Measure1D,
        window: &Compactum,
        cells: usize,
    ) -> Result<GridDensity> {
        if window.dim() != 1 {
            return Err(Error::Representation("window must be 1-dimensional".into()));
        }
        let lo = window.lower[0];
        let width = (window.upper[0] - window.lower[0]) / cells as f64;
        let mut mass = vec![0.0; cells];
        let w = 1.0 / m1.len() as f64;
        for &v in m1.values() {
            let mut i = ((v - lo) / width).floor() as isize;
            i = i.clamp(0, cells as isize - 1);
            mass[i as usize] += w;
        }
        let values = mass.iter().map(|m| m / width).collect();
        GridDensity::new(window.clone(), vec![cells], values)
    }
}

/// Tagged union over the five measure families.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    One(Measure1D),
    Gaussian(GaussianMeasure),
    Product(ProductMeasure),
    Discrete(DiscreteMeasure),
    Grid(GridDensity),
}

impl From<Measure1D> for Measure {
    fn from(m: Measure1D) -> Self {
        Measure::One(m)
    }
}
impl From<GaussianMeasure> for Measure {
    fn from(m: GaussianMeasure) -> Self {
        Measure::Gaussian(m)
    }
}
impl From<ProductMeasure> for Measure {
    fn from(m: ProductMeasure) -> Self {
        Measure::Product(m)
    }
}
impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}
impl From<GridDensity> for Measure {
    fn from(m: GridDensity) -> Self {
        Measure::Grid(m)
    }
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::One(_) => 1,
            Measure::Gaussian(g) => g.dim(),
            Measure::Product(p) => p.dim(),
            Measure::Discrete(d) => d.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Measure::One(_) => "quantile1d",
            Measure::Gaussian(_) => "gaussian",
            Measure::Product(_) => "product",
            Measure::Discrete(_) => "discrete",
            Measure::Grid(_) => "grid",
        }
    }

    /// Deterministic discrete approximation used for cross-family
    /// distances. The resolution is `n` support points (grids keep their
    /// cell centers).
    pub fn to_discrete(&self, n: usize) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(d) => Ok(d.clone()),
            Measure::One(m) => {
                let pts = (0..n)
                    .map(|i| vec![m.quantile_unchecked((i as f64 + 0.5) / n as f64)])
                    .collect::<Vec<_>>();
                // atoms may coincide for degenerate measures; weighted
                // construction merges them
                merge_weighted(pts, vec![1.0 / n as f64; n])
            }
            Measure::Grid(g) => {
                let mut pts = Vec::with_capacity(g.n_cells());
                let mut w = Vec::with_capacity(g.n_cells());
                let vol = g.cell_volume();
                for idx in 0..g.n_cells() {
                    let mass = g.values()[idx] * vol;
                    if mass > 0.0 {
                        pts.push(g.cell_center(idx));
                        w.push(mass);
                    }
                }
                let total: f64 = w.iter().sum();
                for x in &mut w {
                    *x /= total;
                }
                DiscreteMeasure::weighted(pts, w)
            }
            Measure::Gaussian(_) | Measure::Product(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(CROSS_FAMILY_SEED);
                let pts = self.sample_points(n, &mut rng)?;
                merge_weighted(pts, vec![1.0 / n as f64; n])
            }
        }
    }

    pub(crate) fn sample_points(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        match self {
            Measure::One(m) => {
                for _ in 0..n {
                    let u: f64 = rng.random();
                    out.push(vec![m.quantile_unchecked(u.clamp(1e-12, 1.0 - 1e-12))]);
                }
            }
            Measure::Gaussian(g) => {
                let root = linalg::matrix_sqrt_spd(g.covariance())?;
                let d = g.dim();
                for _ in 0..n {
                    let z = nalgebra::DVector::from_fn(d, |_, _| {
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
                    });
                    out.push((&root * z).iter().cloned().collect());
                }
            }
            Measure::Product(p) => {
                let factor_draws = p
                    .factors()
                    .iter()
                    .map(|f| f.sample_points(n, rng))
                    .collect::<Result<Vec<_>>>()?;
                for i in 0..n {
                    let mut x = Vec::with_capacity(p.dim());
                    for fd in &factor_draws {
                        x.extend_from_slice(&fd[i]);
                    }
                    out.push(x);
                }
            }
            Measure::Discrete(dm) => {
                let mut cum = Vec::with_capacity(dm.len());
                let mut acc = 0.0;
                for w in dm.weights() {
                    acc += w;
                    cum.push(acc);
                }
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let k = cum.partition_point(|c| *c < u).min(dm.len() - 1);
                    out.push(dm.points()[k].clone());
                }
            }
            Measure::Grid(g) => {
                let vol = g.cell_volume();
                let mut cum = Vec::with_capacity(g.n_cells());
                let mut acc = 0.0;
                for v in g.values() {
                    acc += v * vol;
                    cum.push(acc);
                }
                let last = *cum.last().unwrap();
                for _ in 0..n {
                    let u: f64 = rng.random::<f64>() * last;
                    let k = cum.partition_point(|c| *c < u).min(g.n_cells() - 1);
                    let center = g.cell_center(k);
                    let x = center
                        .iter()
                        .enumerate()
                        .map(|(ax, c)| {
                            let w = (g.window().upper[ax] - g.window().lower[ax])
                                / g.cells_per_axis()[ax] as f64;
                            c + (rng.random::<f64>() - 0.5) * w
                        })
                        .collect();
                    out.push(x);
                }
            }
        }
        Ok(out)
    }
}

fn merge_weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<DiscreteMeasure> {
    let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(points.len());
    'outer: for (p, w) in points.into_iter().zip(weights) {
        for (q, wq) in merged.iter_mut() {
            if *q == p {
                *wq += w;
                continue 'outer;
            }
        }
        merged.push((p, w));
    }
    let (pts, ws): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
    DiscreteMeasure::weighted(pts, ws)
}

/// Finite multiset of points in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Compactum,
    pub points: Vec<Vec<f64>>,
}

impl PointPattern {
    pub fn new(window: Compactum, points: Vec<Vec<f64>>) -> Result<Self> {
        for p in &points {
            if p.len() != window.dim() {
                return Err(Error::Shape("point dimension differs from window".into()));
            }
        }
        Ok(Self { window, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Empirical measure of the pattern (equal weights).
    pub fn empirical(&self) -> Result<Measure> {
        if self.window.dim() == 1 {
            Ok(Measure::One(Measure1D::from_sample(
                self.points.iter().map(|p| p[0]).collect(),
            )?))
        } else {
            merge_weighted(
                self.points.clone(),
                vec![1.0 / self.len() as f64; self.len()],
            )
            .map(Measure::Discrete)
        }
    }
}

/// Quantile G⁻¹(q) of a 1D measure for q ∈ (0,1).
pub fn quantile(m: &Measure1D, q: f64) -> Result<f64> {
    m.quantile(q)
}

/// 2-Wasserstein distance between two measures of the same family (or
/// cross-family via the documented discrete conversion).
pub fn wasserstein2(a: &Measure, b: &Measure) -> Result<f64> {
    wasserstein2_sq(a, b).map(|d2| d2.max(0.0).sqrt())
}

/// Squared 2-Wasserstein distance.
pub fn wasserstein2_sq(a: &Measure, b: &Measure) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "measure dimensions {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    match (a, b) {
        (Measure::One(x), Measure::One(y)) => Ok(x.quantile_l2_sq(y)),
        (Measure::Gaussian(x), Measure::Gaussian(y)) => x.wasserstein2_sq(y),
        (Measure::Product(x), Measure::Product(y)) => {
            if x.factors().len() != y.factors().len() {
                return Err(Error::Representation(
                    "product measures have different factor counts".into(),
                ));
            }
            let mut total = 0.0;
            for (fx, fy) in x.factors().iter().zip(y.factors()) {
                total += wasserstein2_sq(fx, fy)?;
            }
            Ok(total)
        }
        (Measure::Discrete(x), Measure::Discrete(y)) => {
            Ok(crate::transport::optimal_coupling_discrete(x, y)?.cost)
        }
        (Measure::Grid(x), Measure::Grid(y)) if x.dim() == 1 => Ok(x
            .to_measure1d(DEFAULT_QUANTILE_GRID)?
            .quantile_l2_sq(&y.to_measure1d(DEFAULT_QUANTILE_GRID)?)),
        // 1D grids and quantile measures share the quantile-function route
        (Measure::One(x), Measure::Grid(y)) | (Measure::Grid(y), Measure::One(x))
            if y.dim() == 1 =>
        {
            Ok(x.quantile_l2_sq(&y.to_measure1d(DEFAULT_QUANTILE_GRID)?))
        }
        _ => {
            let da = a.to_discrete(CROSS_FAMILY_RESOLUTION)?;
            let db = b.to_discrete(CROSS_FAMILY_RESOLUTION)?;
            Ok(crate::transport::optimal_coupling_discrete(&da, &db)?.cost)
        }
    }
}

/// Push-forward t#m, staying in the same family when it is closed under
/// the map.
pub fn push_forward(t: &TransportMap, m: &Measure) -> Result<Measure> {
    match (t, m) {
        (TransportMap::Monotone1D(f), Measure::One(x)) => {
            let values = x.values().iter().map(|v| f.apply_scalar(*v)).collect();
            Ok(Measure::One(match x.repr() {
                Repr1D::QuantileGrid => Measure1D::from_quantiles(values)?,
                Repr1D::Sample => Measure1D::from_sample(values)?,
            }))
        }
        (TransportMap::Linear(l), Measure::Gaussian(g)) => {
            let t = l.matrix();
            if t.nrows() != g.dim() {
                return Err(Error::Shape("map/measure dimension mismatch".into()));
            }
            Ok(Measure::Gaussian(GaussianMeasure::new(
                t * g.covariance() * t.transpose(),
            )?))
        }
        (TransportMap::Product(pm), Measure::Product(p)) => {
            if pm.factors().len() != p.factors().len() {
                return Err(Error::Representation(
                    "product map/measure factor mismatch".into(),
                ));
            }
            let factors = pm
                .factors()
                .iter()
                .zip(p.factors())
                .map(|(tf, mf)| push_forward(tf, mf))
                .collect::<Result<Vec<_>>>()?;
            Ok(Measure::Product(ProductMeasure::new(factors)?))
        }
        (TransportMap::Assignment(asg), Measure::Discrete(d)) => {
            let moved = d
                .points()
                .iter()
                .map(|p| asg.apply(p))
                .collect::<Result<Vec<_>>>()?;
            merge_weighted(moved, d.weights().to_vec()).map(Measure::Discrete)
        }
        (TransportMap::Monotone1D(f), Measure::Grid(g)) if g.dim() == 1 => {
            let q = g.to_measure1d(DEFAULT_QUANTILE_GRID)?;
            let values: Vec<f64> = q.values().iter().map(|v| f.apply_scalar(*v)).collect();
            let moved = Measure1D::from_quantiles(values)?;
            let lo = moved.values()[0].min(g.window().lower[0]);
            let hi = moved.values()[moved.len() - 1].max(g.window().upper[0]);
            let window = Compactum::new(vec![lo], vec![hi + f64::EPSILON.max(1e-12)])?;
            Ok(Measure::Grid(GridDensity::from_measure1d(
                &moved,
                &window,
                g.cells_per_axis()[0],
            )?))
        }
        (TransportMap::GridMap(gm), Measure::Grid(g)) => {
            // displace cell centers and re-bin on the same grid
            let vol = g.cell_volume();
            let mut mass = vec![0.0; g.n_cells()];
            for idx in 0..g.n_cells() {
                let moved = gm.apply(&g.cell_center(idx))?;
                mass[g.cell_of(&moved)] += g.values()[idx] * vol;
            }
            let values = mass.iter().map(|m| m / vol).collect();
            Ok(Measure::Grid(GridDensity::new(
                g.window().clone(),
                g.cells_per_axis().to_vec(),
                values,
            )?))
        }
        _ => Err(Error::Representation(format!(
            "push-forward of {} by {} is not supported",
            m.family_name(),
            t.kind_name()
        ))),
    }
}

/// n i.i.d. draws from the measure, deterministic given the seed.
pub fn sample(m: &Measure, n: usize, rng_seed: u64) -> Result<PointPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let points = m.sample_points(n, &mut rng)?;
    let window = match m {
        Measure::Grid(g) => g.window().clone(),
        _ => bounding_window(m, &points)?,
    };
    PointPattern::new(window, points)
}

fn bounding_window(m: &Measure, points: &[Vec<f64>]) -> Result<Compactum> {
    let d = m.dim();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for p in points {
        for k in 0..d {
            lower[k] = lower[k].min(p[k]);
            upper[k] = upper[k].max(p[k]);
        }
    }
    if points.is_empty() {
        lower = vec![0.0; d];
        upper = vec![1.0; d];
    }
    for k in 0..d {
        let pad = 1e-9 + 1e-9 * (upper[k] - lower[k]).abs().max(1.0);
        lower[k] -= pad;
        upper[k] += pad;
    }
    Compactum::new(lower, upper)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform01(m: usize) -> Measure1D {
        Measure1D::from_quantile_fn(|q| q, m).unwrap()
    }

    #[test]
    fn quantile_of_uniform_is_identity() {
        let m = uniform01(1024);
        assert_abs_diff_eq!(m.quantile(0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.quantile(0.25).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn quantile_of_point_mass_is_constant() {
        let m = Measure1D::from_quantiles(vec![3.0; 64]).unwrap();
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(m.quantile(q).unwrap(), 3.0);
        }
    }

    #[test]
    fn quantile_of_two_atom_mixture_inverts_cdf() {
        let m = Measure1D::from_sample(vec![0.0, 1.0]).unwrap();
        assert_eq!(m.quantile(0.25).unwrap(), 0.0);
        assert_eq!(m.quantile(0.75).unwrap(), 1.0);
    }

    #[test]
    fn quantile_rejects_out_of_range_levels() {
        let m = uniform01(16);
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(-0.5).is_err());
    }

    #[test]
    fn distance_between_identical_measures_is_zero() {
        let m = Measure::One(uniform01(256));
        assert_eq!(wasserstein2(&m, &m).unwrap(), 0.0);
        let g = Measure::Gaussian(GaussianMeasure::standard(3));
        assert_abs_diff_eq!(wasserstein2(&g, &g).unwrap(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn distance_between_point_masses_is_separation() {
        let a = Measure::One(Measure1D::point_mass(0.0));
        let b = Measure::One(Measure1D::point_mass(-2.5));
        assert_abs_diff_eq!(wasserstein2(&a, &b).unwrap(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_distance_closed_form_vs_quantile_grid() {
        let s1 = GaussianMeasure::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let s2 = GaussianMeasure::new(DMatrix::from_element(1, 1, 4.0)).unwrap();
        let closed = s1.wasserstein2_sq(&s2).unwrap().sqrt();
        assert_abs_diff_eq!(closed, 1.0, epsilon = 1e-10);
        // quantile-grid route on a fine grid
        let m = 8192;
        let q1 = Measure1D::from_quantile_fn(|q| normal_quantile(q), m).unwrap();
        let q2 = Measure1D::from_quantile_fn(|q| 2.0 * normal_quantile(q), m).unwrap();
        let grid = q1.quantile_l2_sq(&q2).sqrt();
        assert!((grid - closed).abs() <= 1e-3, "grid {grid} vs {closed}");
    }

    // Acklam-style rational approximation of the standard normal quantile;
    // accurate to ~1e-9, used only as a test fixture.
    pub(crate) fn normal_quantile(p: f64) -> f64 {
        debug_assert!(p > 0.0 && p < 1.0);
        const A: [f64; 6] = [
            -3.969683028665376e+01,
            2.209460984245205e+02,
            -2.759285104469687e+02,
            1.383577518672690e+02,
            -3.066479806614716e+01,
            2.506628277459239e+00,
        ];
        const B: [f64; 5] = [
            -5.447609879822406e+01,
            1.615858368580409e+02,
            -1.556989798598866e+02,
            6.680131188771972e+01,
            -1.328068155288572e+01,
        ];
        const C: [f64; 6] = [
            -7.784894002430293e-03,
            -3.223964580411365e-01,
            -2.400758277161838e+00,
            -2.549732539343734e+00,
            4.374664141464968e+00,
            2.938163982698783e+00,
        ];
        const D: [f64; 4] = [
            7.784695709041462e-03,
            3.224671290700398e-01,
            2.445134137142996e+00,
            3.754408661907416e+00,
        ];
        let plow = 0.02425;
        if p < plow {
            let q = (-2.0 * p.ln()).sqrt();
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - plow {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            -normal_quantile(1.0 - p)
        }
    }

    #[test]
    fn push_forward_identity_is_noop() {
        let m = Measure::One(uniform01(64));
        let id = TransportMap::identity_1d();
        let out = push_forward(&id, &m).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn push_forward_scales_gaussian_covariance() {
        let g = Measure::Gaussian(GaussianMeasure::standard(2));
        let a = TransportMap::linear(DMatrix::identity(2, 2) * 2.0).unwrap();
        let out = push_forward(&a, &g).unwrap();
        match out {
            Measure::Gaussian(h) => {
                assert_abs_diff_eq!(h.covariance()[(0, 0)], 4.0, epsilon = 1e-12);
                assert_abs_diff_eq!(h.covariance()[(1, 1)], 4.0, epsilon = 1e-12);
            }
            _ => panic!("expected Gaussian"),
        }
    }

    #[test]
    fn push_forward_shifts_uniform_quantiles() {
        let m = uniform01(128);
        let shift = crate::transport::Monotone1D::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let out = push_forward(&TransportMap::Monotone1D(shift), &Measure::One(m.clone())).unwrap();
        match out {
            Measure::One(s) => {
                for (a, b) in m.values().iter().zip(s.values()) {
                    assert_abs_diff_eq!(a + 1.0, *b, epsilon = 1e-12);
                }
            }
            _ => panic!("expected 1D"),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_counts() {
        let m = Measure::One(Measure1D::point_mass(2.0));
        let p = sample(&m, 5, 42).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.points.iter().all(|x| x[0] == 2.0));
        let empty = sample(&m, 0, 42).unwrap();
        assert!(empty.is_empty());
        let g = Measure::Gaussian(GaussianMeasure::standard(2));
        let a = sample(&g, 100, 7).unwrap();
        let b = sample(&g, 100, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_box_sample_mean_near_center() {
        let g = GridDensity::uniform(Compactum::new(vec![0.0], vec![2.0]).unwrap(), vec![64]);
        let n = 10_000;
        let p = sample(&Measure::Grid(g), n, 11).unwrap();
        let mean: f64 = p.points.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        // CLT bound: 4σ/√n with σ = width/√12
        let bound = 4.0 * (2.0 / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean - 1.0).abs() <= bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn grid_quantile_round_trip_preserves_mass() {
        let w = Compactum::new(vec![0.0], vec![1.0]).unwrap();
        let g = GridDensity::from_fn(w.clone(), vec![128], |x| 1.0 + x[0]).unwrap();
        let q = g.to_measure1d(2048).unwrap();
        let back = GridDensity::from_measure1d(&q, &w, 128).unwrap();
        assert_abs_diff_eq!(back.total_mass(), 1.0, epsilon = 1e-9);
        let d = wasserstein2(&Measure::Grid(g), &Measure::Grid(back)).unwrap();
        assert!(d < 2.0 / 128.0, "round-trip distance {d}");
    }

    #[test]
    fn cross_family_pair_resolves_through_discrete() {
        let g = Measure::Gaussian(GaussianMeasure::standard(1));
        let one = Measure::One(uniform01(256));
        let d = wasserstein2(&g, &one).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let a = Measure::Gaussian(GaussianMeasure::standard(2));
        let b = Measure::Gaussian(GaussianMeasure::standard(3));
        assert!(matches!(wasserstein2(&a, &b), Err(Error::Shape(_))));
    }
}
