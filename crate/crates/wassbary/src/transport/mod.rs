//! Exact pairwise optimal transport for the closed-form families.
//!
//! One-dimensional measures use quantile composition, centered Gaussians
//! the Brenier linear map, products the per-factor maps, and discrete
//! measures an exact assignment / transportation solver.

mod assignment;
mod simplex;

pub use assignment::solve_assignment;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{Compactum, DiscreteMeasure, GaussianMeasure, Measure, Measure1D};

/// Maximum number of support points per side for the discrete solver.
pub const DISCRETE_SIZE_CAP: usize = 2048;

/// Piecewise-linear nondecreasing interpolant; extrapolates linearly with
/// the terminal slope beyond the first/last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monotone1D {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Monotone1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Shape("knot vectors empty or mismatched".into()));
        }
        for w in x.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Domain("knot x must be strictly increasing".into()));
            }
        }
        for w in y.windows(2) {
            if !(w[0] <= w[1]) {
                return Err(Error::Domain("knot y must be nondecreasing".into()));
            }
        }
        Ok(Self { x, y })
    }

    /// Build from possibly repeated x knots, merging duplicates.
    pub fn from_knots(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut x = Vec::with_capacity(sorted.len());
        let mut y: Vec<f64> = Vec::with_capacity(sorted.len());
        for (xi, yi) in sorted {
            match x.last() {
                Some(&last) if (xi - last) <= 0.0 => {
                    // duplicate abscissa: keep the largest target
                    let ly = y.last_mut().unwrap();
                    if yi > *ly {
                        *ly = yi;
                    }
                }
                _ => {
                    x.push(xi);
                    y.push(yi);
                }
            }
        }
        Self::new(x, y)
    }

    pub fn identity() -> Self {
        Self {
            x: vec![0.0, 1.0],
            y: vec![0.0, 1.0],
        }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn apply_scalar(&self, v: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            // single knot: translate with unit slope
            return v - self.x[0] + self.y[0];
        }
        if v <= self.x[0] {
            let slope = (self.y[1] - self.y[0]) / (self.x[1] - self.x[0]);
            return self.y[0] + slope * (v - self.x[0]);
        }
        if v >= self.x[n - 1] {
            let slope = (self.y[n - 1] - self.y[n - 2]) / (self.x[n - 1] - self.x[n - 2]);
            return self.y[n - 1] + slope * (v - self.x[n - 1]);
        }
        let i = self.x.partition_point(|xi| *xi <= v) - 1;
        let i = i.min(n - 2);
        let frac = (v - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.y[i] + frac * (self.y[i + 1] - self.y[i])
    }

    /// Exact inverse by swapping knot coordinates. Flat segments collapse
    /// to a single knot of the inverse.
    pub fn invert(&self) -> Result<Monotone1D> {
        let pairs: Vec<(f64, f64)> = self.y.iter().cloned().zip(self.x.iter().cloned()).collect();
        Monotone1D::from_knots(&pairs)
    }
}

/// Linear Brenier map x ↦ Tx with T symmetric positive-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let sym = linalg::symmetrize(&matrix);
        let asym = (&matrix - &sym).abs().max();
        if asym > 1e-8 * (1.0 + matrix.abs().max()) {
            return Err(Error::Domain(format!(
                "linear map asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        linalg::validate_spd(&sym, "linear transport map")?;
        Ok(Self { matrix: sym })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Product of coordinate-block maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMap {
    factors: Vec<TransportMap>,
}

impl ProductMap {
    pub fn new(factors: Vec<TransportMap>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Domain("product map needs ≥1 factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[TransportMap] {
        &self.factors
    }
}

/// Source-point → target-point table for discrete measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    source: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    /// assign[i] is the target index of source point i
    assign: Vec<usize>,
}

impl Assignment {
    pub fn new(source: Vec<Vec<f64>>, target: Vec<Vec<f64>>, assign: Vec<usize>) -> Result<Self> {
        if source.len() != assign.len() {
            return Err(Error::Shape("assignment table length mismatch".into()));
        }
        if assign.iter().any(|&j| j >= target.len()) {
            return Err(Error::Shape("assignment index out of range".into()));
        }
        Ok(Self {
            source,
            target,
            assign,
        })
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    pub fn source(&self) -> &[Vec<f64>] {
        &self.source
    }

    pub fn target(&self) -> &[Vec<f64>] {
        &self.target
    }

    /// Image of a point: the target of the nearest source point.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.source.iter().enumerate() {
            let d = sq_dist(s, x);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        let i = best.ok_or_else(|| Error::Domain("assignment has no source points".into()))?;
        Ok(self.target[self.assign[i]].clone())
    }

    pub fn is_bijection(&self) -> bool {
        if self.source.len() != self.target.len() {
            return false;
        }
        let mut seen = vec![false; self.target.len()];
        for &j in &self.assign {
            if seen[j] {
                return false;
            }
            seen[j] = true;
        }
        true
    }

    /// Invert the table; requires a bijection.
    pub fn invert(&self) -> Result<Assignment> {
        if !self.is_bijection() {
            return Err(Error::Domain("assignment is not a bijection".into()));
        }
        let mut inv = vec![0usize; self.assign.len()];
        for (i, &j) in self.assign.iter().enumerate() {
            inv[j] = i;
        }
        Assignment::new(self.target.clone(), self.source.clone(), inv)
    }
}

/// Per-cell displacement field over a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub window: Compactum,
    pub cells_per_axis: Vec<usize>,
    /// displacement t(c) − c at each cell center, row-major
    pub displacement: Vec<Vec<f64>>,
}

impl GridMap {
    /// Nearest-cell displacement lookup.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.window.dim() {
            return Err(Error::Shape("point dimension differs from grid".into()));
        }
        let mut idx = 0usize;
        for k in 0..self.window.dim() {
            let w = (self.window.upper[k] - self.window.lower[k]) / self.cells_per_axis[k] as f64;
            let i = (((x[k] - self.window.lower[k]) / w).floor() as isize)
                .clamp(0, self.cells_per_axis[k] as isize - 1) as usize;
            idx = idx * self.cells_per_axis[k] + i;
        }
        Ok(x.iter()
            .zip(&self.displacement[idx])
            .map(|(a, b)| a + b)
            .collect())
    }
}

/// Tagged union of map representations.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportMap {
    Monotone1D(Monotone1D),
    Linear(LinearMap),
    Product(ProductMap),
    Assignment(Assignment),
    GridMap(GridMap),
}

impl TransportMap {
    pub fn identity_1d() -> Self {
        TransportMap::Monotone1D(Monotone1D::identity())
    }

    pub fn linear(matrix: DMatrix<f64>) -> Result<Self> {
        Ok(TransportMap::Linear(LinearMap::new(matrix)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TransportMap::Monotone1D(_) => "monotone1d",
            TransportMap::Linear(_) => "linear",
            TransportMap::Product(_) => "product",
            TransportMap::Assignment(_) => "assignment",
            TransportMap::GridMap(_) => "gridmap",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TransportMap::Monotone1D(_) => 1,
            TransportMap::Linear(l) => l.dim(),
            TransportMap::Product(p) => p.factors().iter().map(|f| f.dim()).sum(),
            TransportMap::Assignment(a) => a.source().first().map_or(0, |p| p.len()),
            TransportMap::GridMap(g) => g.window.dim(),
        }
    }

    /// Evaluate the map at a point.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            TransportMap::Monotone1D(f) => {
                if x.len() != 1 {
                    return Err(Error::Shape("1D map applied to non-scalar".into()));
                }
                Ok(vec![f.apply_scalar(x[0])])
            }
            TransportMap::Linear(l) => {
                if x.len() != l.dim() {
                    return Err(Error::Shape("linear map dimension mismatch".into()));
                }
                let v = nalgebra::DVector::from_column_slice(x);
                Ok((l.matrix() * v).iter().cloned().collect())
            }
            TransportMap::Product(p) => {
                let mut out = Vec::with_capacity(x.len());
                let mut offset = 0usize;
                for f in p.factors() {
                    let d = f.dim();
                    if offset + d > x.len() {
                        return Err(Error::Shape("product map dimension mismatch".into()));
                    }
                    out.extend(f.apply(&x[offset..offset + d])?);
                    offset += d;
                }
                if offset != x.len() {
                    return Err(Error::Shape("product map dimension mismatch".into()));
                }
                Ok(out)
            }
            TransportMap::Assignment(a) => a.apply(x),
            TransportMap::GridMap(g) => g.apply(x),
        }
    }
}

/// Kantorovich coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    /// plan[i][j]: mass moved from source i to target j
    pub plan: DMatrix<f64>,
    /// optimal value of ∫‖x−y‖² dξ
    pub cost: f64,
}

impl Coupling {
    /// Check row/column marginals within tolerance 1e−9.
    pub fn marginals_ok(&self) -> bool {
        for (i, w) in self.source.weights().iter().enumerate() {
            if (self.plan.row(i).sum() - w).abs() > 1e-9 {
                return false;
            }
        }
        for (j, w) in self.target.weights().iter().enumerate() {
            if (self.plan.column(j).sum() - w).abs() > 1e-9 {
                return false;
            }
        }
        true
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Optimal map in one dimension: quantile composition G_dst⁻¹ ∘ G_src.
pub fn optimal_map_1d(src: &Measure1D, dst: &Measure1D) -> Result<TransportMap> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::Domain("empty 1D measure".into()));
    }
    // a fine uniform level grid plus both measures' own representation
    // levels, so the map (and its inverse) is exact on the atoms
    let fine = crate::measures::DEFAULT_QUANTILE_GRID;
    let mut levels: Vec<f64> = (0..fine).map(|i| (i as f64 + 0.5) / fine as f64).collect();
    levels.extend((0..src.len()).map(|i| (i as f64 + 0.5) / src.len() as f64));
    levels.extend((0..dst.len()).map(|i| (i as f64 + 0.5) / dst.len() as f64));
    let pairs: Vec<(f64, f64)> = levels
        .iter()
        .map(|&q| (src.quantile_unchecked(q), dst.quantile_unchecked(q)))
        .collect();
    Ok(TransportMap::Monotone1D(Monotone1D::from_knots(&pairs)?))
}

/// Brenier map between centered Gaussians:
/// T = S_dst^{1/2} [S_dst^{1/2} S_src S_dst^{1/2}]^{−1/2} S_dst^{1/2}.
pub fn optimal_map_gaussian(src: &GaussianMeasure, dst: &GaussianMeasure) -> Result<TransportMap> {
    if src.dim() != dst.dim() {
        return Err(Error::Shape(format!(
            "Gaussian dimensions {} vs {}",
            src.dim(),
            dst.dim()
        )));
    }
    let r = linalg::matrix_sqrt_spd(dst.covariance())?;
    let mid = linalg::matrix_inv_sqrt_spd(&(&r * src.covariance() * &r))?;
    TransportMap::linear(&r * mid * &r)
}

/// Optimal map between product measures with aligned factor structure.
pub fn optimal_map_product(src: &crate::measures::ProductMeasure, dst: &crate::measures::ProductMeasure) -> Result<TransportMap> {
    if src.factors().len() != dst.factors().len() {
        return Err(Error::Representation(
            "product measures have different factor counts".into(),
        ));
    }
    let factors = src
        .factors()
        .iter()
        .zip(dst.factors())
        .map(|(a, b)| optimal_map(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransportMap::Product(ProductMap::new(factors)?))
}

/// Optimal map between two measures of the same family.
pub fn optimal_map(src: &Measure, dst: &Measure) -> Result<TransportMap> {
    if src.dim() != dst.dim() {
        return Err(Error::Shape("measure dimension mismatch".into()));
    }
    match (src, dst) {
        (Measure::One(a), Measure::One(b)) => optimal_map_1d(a, b),
        (Measure::Gaussian(a), Measure::Gaussian(b)) => optimal_map_gaussian(a, b),
        (Measure::Product(a), Measure::Product(b)) => optimal_map_product(a, b),
        (Measure::Discrete(a), Measure::Discrete(b)) => {
            let (assign, _) = optimal_assignment(a, b)?;
            Ok(TransportMap::Assignment(assign))
        }
        (Measure::Grid(a), Measure::Grid(b)) if a.dim() == 1 => {
            let qa = a.to_measure1d(crate::measures::DEFAULT_QUANTILE_GRID)?;
            let qb = b.to_measure1d(crate::measures::DEFAULT_QUANTILE_GRID)?;
            optimal_map_1d(&qa, &qb)
        }
        _ => Err(Error::Representation(format!(
            "no closed-form map between {} and {}",
            src.family_name(),
            dst.family_name()
        ))),
    }
}

/// Exact optimal assignment between uniform discrete measures of equal
/// size; returns the map and the transport cost.
pub fn optimal_assignment(src: &DiscreteMeasure, dst: &DiscreteMeasure) -> Result<(Assignment, f64)> {
    if src.len() != dst.len() || !src.is_uniform() || !dst.is_uniform() {
        return Err(Error::Representation(
            "assignment path requires uniform measures of equal size".into(),
        ));
    }
    check_cap(src.len().max(dst.len()))?;
    let m = src.len();
    let perm = if src.dim() == 1 {
        // monotone matching is optimal on the line
        let mut si: Vec<usize> = (0..m).collect();
        si.sort_by(|&a, &b| src.points()[a][0].partial_cmp(&src.points()[b][0]).unwrap());
        let mut ti: Vec<usize> = (0..m).collect();
        ti.sort_by(|&a, &b| dst.points()[a][0].partial_cmp(&dst.points()[b][0]).unwrap());
        let mut p = vec![0usize; m];
        for k in 0..m {
            p[si[k]] = ti[k];
        }
        p
    } else {
        let cost = |i: usize, j: usize| sq_dist(&src.points()[i], &dst.points()[j]);
        solve_assignment(m, cost)
    };
    let total: f64 = (0..m)
        .map(|i| sq_dist(&src.points()[i], &dst.points()[perm[i]]))
        .sum::<f64>()
        / m as f64;
    Ok((
        Assignment::new(src.points().to_vec(), dst.points().to_vec(), perm)?,
        total,
    ))
}

/// Exact minimizer of ∫‖x−y‖² dξ over couplings of two discrete measures.
///
/// Matched uniform sizes go through linear assignment; anything else through
/// the transportation simplex.
pub fn optimal_coupling_discrete(src: &DiscreteMeasure, dst: &DiscreteMeasure) -> Result<Coupling> {
    check_cap(src.len().max(dst.len()))?;
    if src.len() == dst.len() && src.is_uniform() && dst.is_uniform() {
        let (assign, cost) = optimal_assignment(src, dst)?;
        let m = src.len();
        let mut plan = DMatrix::zeros(m, m);
        for (i, &j) in assign.assign().iter().enumerate() {
            plan[(i, j)] = 1.0 / m as f64;
        }
        return Ok(Coupling {
            source: src.clone(),
            target: dst.clone(),
            plan,
            cost,
        });
    }
    let costs = DMatrix::from_fn(src.len(), dst.len(), |i, j| {
        sq_dist(&src.points()[i], &dst.points()[j])
    });
    let (plan, cost) = simplex::transportation_simplex(src.weights(), dst.weights(), &costs)?;
    Ok(Coupling {
        source: src.clone(),
        target: dst.clone(),
        plan,
        cost,
    })
}

fn check_cap(size: usize) -> Result<()> {
    if size > DISCRETE_SIZE_CAP {
        return Err(Error::Capacity {
            size,
            cap: DISCRETE_SIZE_CAP,
        });
    }
    Ok(())
}

/// One Procrustes step for uniform discrete measures: each support point of γ
/// moves to the average of its assigned targets.
pub fn discrete_map_average(
    gamma: &DiscreteMeasure,
    targets: &[DiscreteMeasure],
) -> Result<DiscreteMeasure> {
    if targets.is_empty() {
        return Err(Error::Domain("no target measures".into()));
    }
    let m = gamma.len();
    let mut sums: Vec<Vec<f64>> = gamma
        .points()
        .iter()
        .map(|_| vec![0.0; gamma.dim()])
        .collect();
    for t in targets {
        let (assign, _) = optimal_assignment(gamma, t)?;
        for (i, &j) in assign.assign().iter().enumerate() {
            for k in 0..gamma.dim() {
                sums[i][k] += t.points()[j][k];
            }
        }
    }
    let n = targets.len() as f64;
    let averaged: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|s| s.into_iter().map(|v| v / n).collect())
        .collect();
    // collisions merge weights
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut wts: Vec<f64> = Vec::with_capacity(m);
    'outer: for (p, w) in averaged.into_iter().zip(gamma.weights()) {
        for (q, wq) in pts.iter().zip(wts.iter_mut()) {
            if *q == p {
                *wq += w;
                continue 'outer;
            }
        }
        pts.push(p);
        wts.push(*w);
    }
    DiscreteMeasure::weighted(pts, wts)
}

/// Re-export: symmetric square root of an SPD matrix.
pub use crate::linalg::matrix_sqrt_spd;

/// Monotonicity check ⟨t(x)−t(x′), x−x′⟩ ≥ −1e−9 over probe pairs.
/// Returns the verdict and the smallest inner product observed.
pub fn check_monotone(t: &TransportMap, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<(bool, f64)> {
    let mut worst = f64::INFINITY;
    for (a, b) in probes {
        let ta = t.apply(a)?;
        let tb = t.apply(b)?;
        let inner: f64 = ta
            .iter()
            .zip(&tb)
            .zip(a.iter().zip(b))
            .map(|((ya, yb), (xa, xb))| (ya - yb) * (xa - xb))
            .sum();
        worst = worst.min(inner);
    }
    if probes.is_empty() {
        worst = 0.0;
    }
    Ok((worst >= -1e-9, worst))
}
