//! Warped point-process pipeline: random warp maps, Poisson sampling, kernel
//! intensity estimation, population estimation via the barycenter, and the
//! consistency-experiment harness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{barycenter, DescentConfig, DescentTrace};
use crate::error::{Error, Result};
pub use crate::measures::PointPattern;
use crate::measures::{wasserstein2, Compactum, GridDensity, Measure};
use crate::registration::{
    default_probe_grid, invert_map, register_pattern, registration_error,
};
use crate::transport::{Monotone1D, ProductMap, TransportMap};

/// Knots per axis used to tabulate warp maps.
const WARP_KNOTS: usize = 513;

/// Random warp family: coordinatewise sinusoidal perturbations of the
/// identity, applied after affine rescaling of the window to [0,1] per axis.
/// Each component u ↦ u − κ·sin(πju)/(π|j|) with j drawn uniformly from
/// ±{1..J} is strictly increasing for κ < 1, fixes the endpoints, and the
/// family mean is the identity by the j ↔ −j symmetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarpFamily {
    pub window: Compactum,
    /// Amplitude κ ∈ [0, 1); 0 gives the identity map.
    pub amplitude: f64,
    /// Maximum frequency J ≥ 1.
    pub max_frequency: u32,
}

impl WarpFamily {
    pub fn new(window: Compactum, amplitude: f64, max_frequency: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::Domain(format!(
                "warp amplitude must lie in [0,1) to keep maps monotone, got {amplitude}"
            )));
        }
        if max_frequency == 0 {
            return Err(Error::Domain("warp frequency bound must be ≥ 1".into()));
        }
        Ok(WarpFamily {
            window,
            amplitude,
            max_frequency,
        })
    }
}

/// A sampled warp with its exact inverse and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct WarpMap {
    pub forward: TransportMap,
    pub inverse: TransportMap,
    /// Drawn signed frequency per axis.
    pub frequencies: Vec<i32>,
    pub amplitude: f64,
}

/// Draw one warp map; deterministic per seed.
pub fn sample_warp(family: &WarpFamily, rng_seed: u64) -> Result<WarpMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_warp_with(family, &mut rng)
}

pub fn sample_warp_with(family: &WarpFamily, rng: &mut ChaCha8Rng) -> Result<WarpMap> {
    let d = family.window.dim();
    let mut frequencies = Vec::with_capacity(d);
    let mut factors = Vec::with_capacity(d);
    for axis in 0..d {
        let magnitude = rng.random_range(1..=family.max_frequency) as i32;
        let j = if rng.random::<bool>() { magnitude } else { -magnitude };
        frequencies.push(j);
        factors.push(axis_warp(
            family.window.lower[axis],
            family.window.upper[axis],
            family.amplitude,
            j,
        )?);
    }
    let forward = if d == 1 {
        TransportMap::Monotone1D(factors.into_iter().next().unwrap())
    } else {
        TransportMap::Product(ProductMap::new(
            factors.into_iter().map(TransportMap::Monotone1D).collect(),
        )?)
    };
    let inverse = invert_map(&forward)?;
    Ok(WarpMap {
        forward,
        inverse,
        frequencies,
        amplitude: family.amplitude,
    })
}

fn axis_warp(lo: f64, hi: f64, kappa: f64, j: i32) -> Result<Monotone1D> {
    let width = hi - lo;
    let scale = std::f64::consts::PI * j.abs() as f64;
    let knots: Vec<(f64, f64)> = (0..WARP_KNOTS)
        .map(|k| {
            let u = k as f64 / (WARP_KNOTS - 1) as f64;
            let t = u - kappa * (std::f64::consts::PI * j as f64 * u).sin() / scale;
            (lo + width * u, lo + width * t)
        })
        .collect();
    Monotone1D::from_knots(&knots)
}

/// Poisson process on the window: a Poisson(τ) count of i.i.d. draws from the
/// intensity measure. Deterministic per seed.
pub fn sample_poisson(
    intensity: &Measure,
    tau: f64,
    window: &Compactum,
    rng_seed: u64,
) -> Result<PointPattern> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Domain(format!("mean count must be finite and ≥ 0, got {tau}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_poisson_with(intensity, tau, window, &mut rng)
}

pub fn sample_poisson_with(
    intensity: &Measure,
    tau: f64,
    window: &Compactum,
    rng: &mut ChaCha8Rng,
) -> Result<PointPattern> {
    let count = if tau == 0.0 {
        0
    } else {
        let poisson = Poisson::new(tau)
            .map_err(|e| Error::Domain(format!("invalid Poisson mean {tau}: {e}")))?;
        poisson.sample(rng) as usize
    };
    let points = intensity.sample_points(count, rng)?;
    // restriction to the window: the intensity is assumed supported on it,
    // so clip any numerical stragglers
    let clipped = points
        .into_iter()
        .map(|mut p| {
            for (c, v) in p.iter_mut().enumerate() {
                *v = v.clamp(window.lower[c], window.upper[c]);
            }
            p
        })
        .collect();
    PointPattern::new(window.clone(), clipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelShape {
    Gaussian,
}

/// Unit-variance isotropic smoothing kernel scaled by a bandwidth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::Domain(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KernelSpec {
            shape: KernelShape::Gaussian,
            bandwidth,
        })
    }

    /// Radial profile ψ₁(r) of the unit-variance kernel in dimension d.
    fn profile(&self, r: f64, d: usize) -> f64 {
        match self.shape {
            KernelShape::Gaussian => {
                (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * (-0.5 * r * r).exp()
            }
        }
    }
}

/// Kernel intensity estimate on a grid: each point contributes its kernel
/// restricted to the window and renormalized to unit mass, and the average of
/// the per-point terms is returned. An empty pattern yields the normalized
/// Lebesgue measure on the window.
///
/// Kernel tails are truncated at 6σ; the lost mass (≤ 1e−8) is folded into
/// the per-point normalization.
pub fn kernel_estimate(
    p: &PointPattern,
    spec: &KernelSpec,
    cells_per_axis: usize,
) -> Result<GridDensity> {
    let window = &p.window;
    let d = window.dim();
    let cells = vec![cells_per_axis; d];
    if p.is_empty() {
        return Ok(GridDensity::uniform(window.clone(), cells));
    }
    let sigma = spec.bandwidth;
    let template = GridDensity::uniform(window.clone(), cells.clone());
    let n_cells = template.n_cells();
    let cell_vol = template.cell_volume();
    let cutoff = 6.0 * sigma;

    let mut values = vec![0.0f64; n_cells];
    let m = p.len() as f64;
    for x in &p.points {
        // per-point kernel masses on the grid, truncated at the cutoff
        let mut masses = vec![0.0f64; n_cells];
        let mut total = 0.0;
        for (idx, mass) in masses.iter_mut().enumerate() {
            let center = template.cell_center(idx);
            let r2: f64 = center
                .iter()
                .zip(x)
                .map(|(c, v)| (c - v) * (c - v))
                .sum();
            if r2 > cutoff * cutoff {
                continue;
            }
            *mass = spec.profile(r2.sqrt() / sigma, d);
            total += *mass;
        }
        if total <= 0.0 {
            return Err(Error::Domain(format!(
                "kernel mass on the window vanished for bandwidth {sigma}"
            )));
        }
        for (v, mass) in values.iter_mut().zip(&masses) {
            *v += mass / (total * m * cell_vol);
        }
    }
    GridDensity::new(window.clone(), cells, values)
}

/// C_{ψ,K} = [ψ₁(d_K) · Leb(K)]⁻¹, the constant in the smoothing bound
/// d²(Λ̂, Π̃/m) ≤ C_{ψ,K} σ².
pub fn smoothing_constant(spec: &KernelSpec, window: &Compactum) -> Result<f64> {
    let profile = spec.profile(window.diameter(), window.dim());
    if profile <= 0.0 {
        return Err(Error::Domain(
            "kernel vanishes at the window diameter; constant is infinite".into(),
        ));
    }
    Ok(1.0 / (profile * window.volume()))
}

/// Population estimate from warped patterns: smooth each pattern, take the
/// barycenter of the smoothed intensities, and return the Procrustes maps as
/// warp estimates.
#[derive(Debug, Clone)]
pub struct PopulationEstimate {
    pub lambda_hat: GridDensity,
    /// T̂ᵢ: estimated warp (barycenter → ith smoothed intensity).
    pub maps: Vec<TransportMap>,
    /// T̂ᵢ⁻¹ used for registration.
    pub inverse_maps: Vec<TransportMap>,
    pub trace: DescentTrace,
}

pub fn estimate_population(
    patterns: &[PointPattern],
    spec: &KernelSpec,
    cells_per_axis: usize,
    cfg: &DescentConfig,
) -> Result<PopulationEstimate> {
    if patterns.is_empty() {
        return Err(Error::Domain("no input patterns".into()));
    }
    let window = &patterns[0].window;
    if patterns.iter().any(|p| p.window != *window) {
        return Err(Error::Domain("patterns must share a common window".into()));
    }
    let smoothed: Result<Vec<Measure>> = patterns
        .par_iter()
        .map(|p| Ok(Measure::Grid(kernel_estimate(p, spec, cells_per_axis)?)))
        .collect();
    let smoothed = smoothed?;
    let out = barycenter(&smoothed, cfg)?;
    let lambda_hat = match out.measure {
        Measure::Grid(g) => g,
        _ => unreachable!("grid inputs produce a grid barycenter"),
    };
    let inverse_maps: Result<Vec<TransportMap>> = out.maps.iter().map(invert_map).collect();
    Ok(PopulationEstimate {
        lambda_hat,
        maps: out.maps,
        inverse_maps: inverse_maps?,
        trace: out.trace,
    })
}

/// Full consistency-experiment design: paired (n, τ) cells with a vanishing
/// bandwidth rule σ(τ) = τ^{−1/(d+4)} clipped to (0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub grid_cells: usize,
    pub warp_amplitude: f64,
    pub warp_max_frequency: u32,
}

impl Default for ExperimentDesign {
    fn default() -> Self {
        ExperimentDesign {
            n_grid: vec![5, 20, 80],
            tau_grid: vec![100.0, 400.0, 1600.0],
            replicates: 10,
            seed: 0,
            grid_cells: 128,
            warp_amplitude: 0.9,
            warp_max_frequency: 3,
        }
    }
}

impl ExperimentDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.len() != self.tau_grid.len() {
            return Err(Error::Domain(format!(
                "design needs matching n and τ grids, got {} and {}",
                self.n_grid.len(),
                self.tau_grid.len()
            )));
        }
        if self.replicates == 0 || self.grid_cells == 0 {
            return Err(Error::Domain("replicates and grid cells must be ≥ 1".into()));
        }
        // τ_n / log n must be nondecreasing along the design
        let mut prev = f64::NEG_INFINITY;
        for (&n, &tau) in self.n_grid.iter().zip(&self.tau_grid) {
            let ratio = tau / (n.max(2) as f64).ln();
            if ratio < prev {
                return Err(Error::Domain(
                    "design must keep τ/log n nondecreasing across cells".into(),
                ));
            }
            prev = ratio;
        }
        Ok(())
    }

    pub fn bandwidth(&self, tau: f64, d: usize) -> f64 {
        tau.powf(-1.0 / (d as f64 + 4.0)).min(1.0)
    }
}

/// One result row of the consistency experiment. `status` is "ok" or an
/// error message; metric fields are NaN on failure.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub n: usize,
    pub tau: f64,
    pub sigma: f64,
    pub replicate: usize,
    pub d_lambda: f64,
    pub sup_t_inv_err: f64,
    pub sup_t_err: f64,
    pub reg_dist: f64,
    pub iters: usize,
    pub converged: bool,
    pub status: String,
}

pub fn experiment_rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from(
        "n,tau,sigma,replicate,d_lambda,sup_Tinv_err,sup_T_err,reg_dist,iters,converged,status\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.tau,
            r.sigma,
            r.replicate,
            r.d_lambda,
            r.sup_t_inv_err,
            r.sup_t_err,
            r.reg_dist,
            r.iters,
            r.converged,
            r.status
        ));
    }
    s
}

/// Reference intensity for the experiments: 0.3 + 4.2·x(1−x) on [0,1],
/// normalized to a probability density.
pub fn reference_intensity(grid_cells: usize) -> Result<GridDensity> {
    let window = Compactum::unit(1);
    GridDensity::from_fn(window, vec![grid_cells], |x| 0.3 + 4.2 * x[0] * (1.0 - x[0]))
}

/// Run the full design: for each (n, τ) cell and replicate, simulate warped
/// Poisson patterns, estimate the population, and record the error metrics.
/// Replicate failures become rows with an error status; the run continues.
pub fn run_consistency_experiment(design: &ExperimentDesign) -> Result<Vec<ExperimentRow>> {
    design.validate()?;
    let lambda = reference_intensity(design.grid_cells)?;
    let window = lambda.window().clone();
    let family = WarpFamily::new(window.clone(), design.warp_amplitude, design.warp_max_frequency)?;

    let mut jobs = Vec::new();
    for (cell, (&n, &tau)) in design.n_grid.iter().zip(&design.tau_grid).enumerate() {
        for replicate in 0..design.replicates {
            jobs.push((cell, n, tau, replicate));
        }
    }
    let rows: Vec<ExperimentRow> = jobs
        .par_iter()
        .map(|&(cell, n, tau, replicate)| {
            let sigma = design.bandwidth(tau, 1);
            // independent generator per (cell, replicate)
            let seed = design
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((cell as u64) << 32)
                .wrapping_add(replicate as u64);
            match run_replicate(design, &family, &lambda, n, tau, sigma, seed) {
                Ok(mut row) => {
                    row.replicate = replicate;
                    row
                }
                Err(e) => ExperimentRow {
                    n,
                    tau,
                    sigma,
                    replicate,
                    d_lambda: f64::NAN,
                    sup_t_inv_err: f64::NAN,
                    sup_t_err: f64::NAN,
                    reg_dist: f64::NAN,
                    iters: 0,
                    converged: false,
                    status: format!("error: {e}").replace(',', ";"),
                },
            }
        })
        .collect();
    Ok(rows)
}

fn run_replicate(
    design: &ExperimentDesign,
    family: &WarpFamily,
    lambda: &GridDensity,
    n: usize,
    tau: f64,
    sigma: f64,
    seed: u64,
) -> Result<ExperimentRow> {
    let window = lambda.window().clone();
    let lambda_measure = Measure::Grid(lambda.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut warps = Vec::with_capacity(n);
    let mut patterns = Vec::with_capacity(n);
    for _ in 0..n {
        let warp = sample_warp_with(family, &mut rng)?;
        // draw from λ, then push through the warp: points follow T#λ
        let raw = sample_poisson_with(&lambda_measure, tau, &window, &mut rng)?;
        let warped = register_pattern(&raw, &warp.forward)?;
        warps.push(warp);
        patterns.push(warped);
    }

    let spec = KernelSpec::gaussian(sigma)?;
    let est = estimate_population(&patterns, &spec, design.grid_cells, &DescentConfig::default())?;

    let d_lambda = wasserstein2(
        &Measure::Grid(est.lambda_hat.clone()),
        &lambda_measure,
    )?;

    let probes = default_probe_grid(&window, 50);
    let mut sup_t_err: f64 = 0.0;
    let mut sup_t_inv_err: f64 = 0.0;
    let mut registered_points = Vec::new();
    for (i, warp) in warps.iter().enumerate() {
        sup_t_err = sup_t_err.max(registration_error(&est.maps[i], &warp.forward, &probes)?);
        sup_t_inv_err =
            sup_t_inv_err.max(registration_error(&est.inverse_maps[i], &warp.inverse, &probes)?);
        let reg = register_pattern(&patterns[i], &est.inverse_maps[i])?;
        registered_points.extend(reg.points);
    }
    // registration distance: pooled registered points against λ
    let reg_dist = if registered_points.is_empty() {
        f64::NAN
    } else {
        let pooled = PointPattern::new(window, registered_points)?;
        wasserstein2(&pooled.empirical()?, &lambda_measure)?
    };

    Ok(ExperimentRow {
        n,
        tau,
        sigma,
        replicate: 0,
        d_lambda,
        sup_t_inv_err,
        sup_t_err,
        reg_dist,
        iters: est.trace.iterations_used,
        converged: est.trace.converged,
        status: "ok".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::check_monotone;
    use approx::assert_relative_eq;

    #[test]
    fn zero_amplitude_warp_is_identity() {
        let family = WarpFamily::new(Compactum::unit(1), 0.0, 3).unwrap();
        let warp = sample_warp(&family, 1).unwrap();
        for x in [0.0, 0.3, 0.7, 1.0] {
            assert_relative_eq!(warp.forward.apply(&[x]).unwrap()[0], x, epsilon = 1e-12);
        }
    }

    #[test]
    fn warps_are_monotone_and_fix_the_faces() {
        let family = WarpFamily::new(Compactum::unit(1), 0.9, 4).unwrap();
        for seed in 0..50 {
            let warp = sample_warp(&family, seed).unwrap();
            let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
                .map(|k| (vec![k as f64 / 100.0], vec![(k as f64 + 0.7) / 100.0]))
                .collect();
            let (ok, _) = check_monotone(&warp.forward, &probes).unwrap();
            assert!(ok, "seed {seed} produced a non-monotone warp");
            assert_relative_eq!(warp.forward.apply(&[0.0]).unwrap()[0], 0.0, epsilon = 1e-10);
            assert_relative_eq!(warp.forward.apply(&[1.0]).unwrap()[0], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn warp_family_mean_is_identity() {
        // Monte Carlo unbiasedness check at probe points
        let family = WarpFamily::new(Compactum::unit(1), 0.9, 3).unwrap();
        let m = 4000;
        let probes = [0.2, 0.5, 0.8];
        let mut sums = [0.0f64; 3];
        for seed in 0..m {
            let warp = sample_warp(&family, seed).unwrap();
            for (s, &x) in sums.iter_mut().zip(&probes) {
                *s += warp.forward.apply(&[x]).unwrap()[0];
            }
        }
        for (s, &x) in sums.iter().zip(&probes) {
            let mean = s / m as f64;
            // per-draw deviation is bounded by κ/π; 4σ/√m margin
            let margin = 4.0 * (0.9 / std::f64::consts::PI) / (m as f64).sqrt();
            assert!(
                (mean - x).abs() <= margin,
                "mean warp at {x} drifted to {mean}"
            );
        }
    }

    #[test]
    fn warp_amplitude_validation() {
        assert!(WarpFamily::new(Compactum::unit(1), 1.0, 3).is_err());
        assert!(WarpFamily::new(Compactum::unit(1), 0.5, 0).is_err());
    }

    #[test]
    fn poisson_counts_behave() {
        let w = Compactum::unit(1);
        let lambda = Measure::Grid(GridDensity::uniform(w.clone(), vec![16]));
        assert!(sample_poisson(&lambda, 0.0, &w, 1).unwrap().is_empty());

        let mut total = 0usize;
        let reps = 400;
        for seed in 0..reps {
            let p = sample_poisson(&lambda, 50.0, &w, seed).unwrap();
            total += p.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 50.0).abs() < 0.03 * 50.0, "mean count {mean}");

        // τ=1000: count within ±4√τ for a fixed seed
        let p = sample_poisson(&lambda, 1000.0, &w, 7).unwrap();
        let dev = (p.len() as f64 - 1000.0).abs();
        assert!(dev <= 4.0 * 1000.0f64.sqrt(), "count {} too extreme", p.len());
    }

    #[test]
    fn empty_pattern_smooths_to_uniform() {
        let w = Compactum::unit(1);
        let p = PointPattern::new(w, vec![]).unwrap();
        let est = kernel_estimate(&p, &KernelSpec::gaussian(0.1).unwrap(), 32).unwrap();
        for v in est.values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_point_kernel_is_symmetric_and_normalized() {
        let w = Compactum::unit(1);
        let p = PointPattern::new(w, vec![vec![0.5]]).unwrap();
        let est = kernel_estimate(&p, &KernelSpec::gaussian(0.05).unwrap(), 64).unwrap();
        assert_relative_eq!(est.total_mass(), 1.0, epsilon = 1e-6);
        let v = est.values();
        for k in 0..32 {
            assert_relative_eq!(v[k], v[63 - k], max_relative = 1e-9);
        }
    }

    #[test]
    fn smoothing_constant_examples() {
        let spec = KernelSpec::gaussian(0.3).unwrap();
        let c = smoothing_constant(&spec, &Compactum::unit(1)).unwrap();
        assert_relative_eq!(c, 4.1327, max_relative = 1e-4);
        // doubling the volume halves the constant
        let wide = Compactum::new(vec![0.0], vec![2.0]).unwrap();
        let spec_wide = KernelSpec::gaussian(0.3).unwrap();
        let c_wide = smoothing_constant(&spec_wide, &wide).unwrap();
        let profile_ratio = (-0.5f64).exp() / (-2.0f64).exp();
        assert_relative_eq!(c_wide, c * profile_ratio / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn smoothing_bound_holds() {
        use rand::Rng;
        let w = Compactum::unit(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..25 {
            let m = 1 + rng.random_range(0..20usize);
            let pts: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random::<f64>()]).collect();
            let p = PointPattern::new(w.clone(), pts).unwrap();
            for sigma in [0.01, 0.05, 0.2, 1.0] {
                let spec = KernelSpec::gaussian(sigma).unwrap();
                let est = kernel_estimate(&p, &spec, 128).unwrap();
                let d2 = crate::measures::wasserstein2_sq(
                    &Measure::Grid(est),
                    &p.empirical().unwrap(),
                )
                .unwrap();
                let bound = smoothing_constant(&spec, &w).unwrap() * sigma * sigma;
                assert!(
                    d2 <= bound,
                    "trial {trial}: d² = {d2} exceeds C·σ² = {bound} at σ = {sigma}"
                );
            }
        }
    }

    #[test]
    fn single_pattern_population_estimate_is_its_smoothing() {
        let w = Compactum::unit(1);
        let p = PointPattern::new(w, vec![vec![0.3], vec![0.6]]).unwrap();
        let spec = KernelSpec::gaussian(0.1).unwrap();
        let est = estimate_population(&[p.clone()], &spec, 64, &DescentConfig::default()).unwrap();
        let direct = kernel_estimate(&p, &spec, 64).unwrap();
        for (a, b) in est.lambda_hat.values().iter().zip(direct.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_design_gives_one_row() {
        let design = ExperimentDesign {
            n_grid: vec![3],
            tau_grid: vec![50.0],
            replicates: 1,
            grid_cells: 48,
            ..ExperimentDesign::default()
        };
        let rows = run_consistency_experiment(&design).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].d_lambda.is_finite());
        assert!(rows[0].sup_t_inv_err.is_finite());
    }

    #[test]
    fn design_validation() {
        let bad = ExperimentDesign {
            n_grid: vec![5, 20],
            tau_grid: vec![100.0],
            ..ExperimentDesign::default()
        };
        assert!(bad.validate().is_err());
        let shrinking = ExperimentDesign {
            n_grid: vec![5, 500],
            tau_grid: vec![100.0, 100.0],
            ..ExperimentDesign::default()
        };
        assert!(shrinking.validate().is_err());
    }
}
