//! Fréchet functional, its gradient, and the gradient-descent / Procrustes
//! iteration with per-family closed-form backends.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::measures::{
    wasserstein2_sq, DiscreteMeasure, GaussianMeasure, GridDensity, Measure, Measure1D,
    ProductMeasure, Repr1D, DEFAULT_QUANTILE_GRID,
};
use crate::transport::{optimal_assignment, optimal_map, optimal_map_gaussian, TransportMap};

/// Objective stagnation guard: stop once |ΔF| drops below this, protecting
/// the loop from quadrature noise near the optimum.
const STAGNATION_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Stopping threshold on ‖F′(γ)‖.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step size τ ∈ [0, 1]; τ = 1 is the optimal step.
    pub tau: f64,
    /// Starting point; defaults to the first input measure.
    pub initial: Option<Measure>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            tolerance: 1e-6,
            max_iterations: 200,
            tau: 1.0,
            initial: None,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Domain(format!(
                "step size must lie in [0,1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// One row of the descent trace. For discrete inputs the objective is not
/// differentiable; `grad_sq` is then the formal gradient of the iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub objective: f64,
    pub grad_sq: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub records: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl DescentTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,objective,grad_sq,delta\n");
        for (i, r) in self.records.iter().enumerate() {
            s.push_str(&format!("{},{},{},{}\n", i, r.objective, r.grad_sq, r.delta));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterOutput {
    pub measure: Measure,
    pub trace: DescentTrace,
    /// Final Procrustes maps t_γ^{μⁱ}, one per input.
    pub maps: Vec<TransportMap>,
}

fn check_family(inputs: &[Measure]) -> Result<()> {
    let Some(first) = inputs.first() else {
        return Err(Error::Domain("empty input list".into()));
    };
    for m in &inputs[1..] {
        if m.family_name() != first.family_name() || m.dim() != first.dim() {
            return Err(Error::Representation(format!(
                "mixed input families: {} (d={}) vs {} (d={}); convert explicitly first",
                first.family_name(),
                first.dim(),
                m.family_name(),
                m.dim()
            )));
        }
    }
    Ok(())
}

fn check_candidate(gamma: &Measure, inputs: &[Measure]) -> Result<()> {
    check_family(inputs)?;
    if gamma.family_name() != inputs[0].family_name() || gamma.dim() != inputs[0].dim() {
        return Err(Error::Representation(format!(
            "candidate family {} (d={}) does not match inputs {} (d={})",
            gamma.family_name(),
            gamma.dim(),
            inputs[0].family_name(),
            inputs[0].dim()
        )));
    }
    Ok(())
}

/// F(γ) = (1/2N) Σᵢ d²(γ, μⁱ). Pairwise solves run in parallel.
pub fn frechet_objective(gamma: &Measure, inputs: &[Measure]) -> Result<f64> {
    check_candidate(gamma, inputs)?;
    let dists: Result<Vec<f64>> = inputs
        .par_iter()
        .map(|mu| wasserstein2_sq(gamma, mu))
        .collect();
    Ok(dists?.iter().sum::<f64>() / (2.0 * inputs.len() as f64))
}

/// ‖F′(γ)‖² = ‖(1/N)Σᵢ t_γ^{μⁱ} − id‖²_{L²(γ)}, evaluated by quadrature over
/// γ's own representation (quantile grid / Gaussian closed form / support
/// points), which is exact per family.
pub fn frechet_gradient_norm_sq(gamma: &Measure, inputs: &[Measure]) -> Result<f64> {
    check_candidate(gamma, inputs)?;
    match gamma {
        Measure::One(g) => {
            let views: Vec<&Measure1D> = inputs.iter().map(as_1d).collect();
            Ok(grad_sq_1d(g, &views))
        }
        Measure::Grid(g) => {
            if g.dim() != 1 {
                return Err(grid_dim_error());
            }
            let gq = g.to_measure1d(DEFAULT_QUANTILE_GRID)?;
            let qs: Result<Vec<Measure1D>> = inputs
                .iter()
                .map(|m| as_grid(m).to_measure1d(DEFAULT_QUANTILE_GRID))
                .collect();
            let qs = qs?;
            let views: Vec<&Measure1D> = qs.iter().collect();
            Ok(grad_sq_1d(&gq, &views))
        }
        Measure::Gaussian(g) => {
            let t_bar = mean_gaussian_map(g, inputs)?;
            Ok(gaussian_grad_sq(g, &t_bar))
        }
        Measure::Product(p) => {
            let mut total = 0.0;
            for (k, factor) in p.factors().iter().enumerate() {
                let fac_inputs: Vec<Measure> = inputs
                    .iter()
                    .map(|m| as_product(m).factors()[k].clone())
                    .collect();
                total += frechet_gradient_norm_sq(factor, &fac_inputs)?;
            }
            Ok(total)
        }
        Measure::Discrete(d) => {
            let targets = assigned_targets(d, inputs)?;
            let m = d.len();
            let n = inputs.len() as f64;
            let mut total = 0.0;
            for (j, x) in d.points().iter().enumerate() {
                for (c, &xc) in x.iter().enumerate() {
                    let mean_c = targets.iter().map(|t| t[j][c]).sum::<f64>() / n;
                    total += (mean_c - xc) * (mean_c - xc) * d.weights()[j];
                }
            }
            let _ = m;
            Ok(total)
        }
    }
}

/// Karcher residual ‖F′(γ)‖; zero exactly at Karcher means (up to quadrature).
pub fn karcher_residual(gamma: &Measure, inputs: &[Measure]) -> Result<f64> {
    Ok(frechet_gradient_norm_sq(gamma, inputs)?.sqrt())
}

/// One Procrustes step: [(1−τ)·id + (τ/N) Σᵢ t_γ^{μⁱ}]#γ, with the
/// representation preserved per family.
pub fn procrustes_step(gamma: &Measure, inputs: &[Measure], tau: f64) -> Result<Measure> {
    check_candidate(gamma, inputs)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("step size {tau} outside [0,1]")));
    }
    match gamma {
        Measure::One(g) => {
            let views: Vec<&Measure1D> = inputs.iter().map(as_1d).collect();
            Ok(Measure::One(step_1d(g, &views, tau)?))
        }
        Measure::Grid(g) => {
            if g.dim() != 1 {
                return Err(grid_dim_error());
            }
            let gq = g.to_measure1d(DEFAULT_QUANTILE_GRID)?;
            let qs: Result<Vec<Measure1D>> = inputs
                .iter()
                .map(|m| as_grid(m).to_measure1d(DEFAULT_QUANTILE_GRID))
                .collect();
            let qs = qs?;
            let views: Vec<&Measure1D> = qs.iter().collect();
            let stepped = step_1d(&gq, &views, tau)?;
            Ok(Measure::Grid(GridDensity::from_measure1d(
                &stepped,
                g.window(),
                g.cells_per_axis()[0],
            )?))
        }
        Measure::Gaussian(g) => {
            let t_bar = mean_gaussian_map(g, inputs)?;
            let d = g.dim();
            let step = DMatrix::identity(d, d) * (1.0 - tau) + &t_bar * tau;
            let cov = symmetrize(&(&step * g.covariance() * step.transpose()));
            Ok(Measure::Gaussian(GaussianMeasure::new(cov)?))
        }
        Measure::Product(p) => {
            let mut factors = Vec::with_capacity(p.factors().len());
            for (k, factor) in p.factors().iter().enumerate() {
                let fac_inputs: Vec<Measure> = inputs
                    .iter()
                    .map(|m| as_product(m).factors()[k].clone())
                    .collect();
                factors.push(procrustes_step(factor, &fac_inputs, tau)?);
            }
            Ok(Measure::Product(ProductMeasure::new(factors)?))
        }
        Measure::Discrete(d) => {
            let targets = assigned_targets(d, inputs)?;
            let n = inputs.len() as f64;
            let points: Vec<Vec<f64>> = d
                .points()
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    x.iter()
                        .enumerate()
                        .map(|(c, &xc)| {
                            let mean_c = targets.iter().map(|t| t[j][c]).sum::<f64>() / n;
                            (1.0 - tau) * xc + tau * mean_c
                        })
                        .collect()
                })
                .collect();
            Ok(Measure::Discrete(DiscreteMeasure::uniform(points)?))
        }
    }
}

/// Algorithm: iterate the Procrustes step until ‖F′(γ)‖ < ε or the iteration
/// budget runs out. Non-convergence is a reported state, not an error.
pub fn barycenter(inputs: &[Measure], cfg: &DescentConfig) -> Result<BarycenterOutput> {
    cfg.validate()?;
    check_family(inputs)?;
    if matches!(inputs[0], Measure::Product(_)) {
        return product_barycenter(inputs, cfg);
    }
    let mut gamma = match &cfg.initial {
        Some(m) => m.clone(),
        None => inputs[0].clone(),
    };
    check_candidate(&gamma, inputs)?;

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    loop {
        let objective = frechet_objective(&gamma, inputs)?;
        let grad_sq = frechet_gradient_norm_sq(&gamma, inputs)?;
        let delta = records
            .last()
            .map(|r| objective - r.objective)
            .unwrap_or(0.0);
        records.push(IterationRecord {
            objective,
            grad_sq,
            delta,
        });
        if grad_sq.sqrt() < cfg.tolerance {
            converged = true;
            break;
        }
        if records.len() > 1 && delta.abs() < STAGNATION_TOL {
            // quadrature-noise plateau at the optimum; treat as converged
            converged = true;
            break;
        }
        if records.len() > cfg.max_iterations {
            break;
        }
        gamma = procrustes_step(&gamma, inputs, cfg.tau)?;
    }

    let maps = final_maps(&gamma, inputs)?;
    let iterations_used = records.len() - 1;
    Ok(BarycenterOutput {
        measure: gamma,
        trace: DescentTrace {
            records,
            iterations_used,
            converged,
        },
        maps,
    })
}

/// The descent decouples coordinatewise on product measures, so each factor
/// runs its own iteration with its own stopping point; the product of the
/// factor barycenters is the product barycenter, exactly.
fn product_barycenter(inputs: &[Measure], cfg: &DescentConfig) -> Result<BarycenterOutput> {
    let n_factors = as_product(&inputs[0]).factors().len();
    for m in inputs {
        if as_product(m).factors().len() != n_factors {
            return Err(Error::Representation(
                "product measures have different factor counts".into(),
            ));
        }
    }
    let initial_factors: Option<&ProductMeasure> = match &cfg.initial {
        Some(Measure::Product(p)) => {
            if p.factors().len() != n_factors {
                return Err(Error::Representation(
                    "initial product measure has a different factor count".into(),
                ));
            }
            Some(p)
        }
        Some(other) => {
            return Err(Error::Representation(format!(
                "initial measure family {} does not match product inputs",
                other.family_name()
            )))
        }
        None => None,
    };

    let mut factor_measures = Vec::with_capacity(n_factors);
    let mut factor_maps: Vec<Vec<TransportMap>> = Vec::with_capacity(n_factors);
    let mut traces = Vec::with_capacity(n_factors);
    for k in 0..n_factors {
        let fac_inputs: Vec<Measure> = inputs
            .iter()
            .map(|m| as_product(m).factors()[k].clone())
            .collect();
        let fac_cfg = DescentConfig {
            initial: initial_factors.map(|p| p.factors()[k].clone()),
            ..cfg.clone()
        };
        let out = barycenter(&fac_inputs, &fac_cfg)?;
        factor_measures.push(out.measure);
        factor_maps.push(out.maps);
        traces.push(out.trace);
    }

    // merge factor traces: totals per aligned iteration, shorter factors held
    // at their final row
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let mut records: Vec<IterationRecord> = Vec::with_capacity(len);
    for j in 0..len {
        let row = |t: &DescentTrace| -> IterationRecord { t.records[j.min(t.records.len() - 1)] };
        let objective: f64 = traces.iter().map(|t| row(t).objective).sum();
        let grad_sq: f64 = traces.iter().map(|t| row(t).grad_sq).sum();
        let delta = if j == 0 {
            0.0
        } else {
            objective - records[j - 1].objective
        };
        records.push(IterationRecord {
            objective,
            grad_sq,
            delta,
        });
    }
    let converged = traces.iter().all(|t| t.converged);

    let maps = (0..inputs.len())
        .map(|i| {
            let factors: Vec<TransportMap> =
                factor_maps.iter().map(|per_input| per_input[i].clone()).collect();
            Ok(TransportMap::Product(crate::transport::ProductMap::new(
                factors,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BarycenterOutput {
        measure: Measure::Product(ProductMeasure::new(factor_measures)?),
        trace: DescentTrace {
            iterations_used: len.saturating_sub(1),
            records,
            converged,
        },
        maps,
    })
}

/// Covariance-space specialization: Γ_{k+1} = T_k Γ_k T_k with
/// T_k = (1/N) Σᵢ tᵢ(Γ_k).
pub fn gaussian_barycenter(
    inputs: &[GaussianMeasure],
    cfg: &DescentConfig,
) -> Result<(GaussianMeasure, DescentTrace)> {
    let measures: Vec<Measure> = inputs.iter().cloned().map(Measure::Gaussian).collect();
    let out = barycenter(&measures, cfg)?;
    match out.measure {
        Measure::Gaussian(g) => Ok((g, out.trace)),
        _ => unreachable!("gaussian inputs produce a gaussian barycenter"),
    }
}

/// Uniform density bound on the iterates:
/// C_μ = min{N^{d−1} maxᵢ‖gⁱ‖∞, N^d minᵢ‖gⁱ‖∞}.
pub fn density_bound(inputs: &[GridDensity]) -> Result<f64> {
    let Some(first) = inputs.first() else {
        return Err(Error::Domain("empty input list".into()));
    };
    let n = inputs.len() as f64;
    let d = first.dim() as i32;
    let sups: Vec<f64> = inputs.iter().map(|g| g.sup_density()).collect();
    let max = sups.iter().cloned().fold(f64::MIN, f64::max);
    let min = sups.iter().cloned().fold(f64::MAX, f64::min);
    Ok((n.powi(d - 1) * max).min(n.powi(d) * min))
}

// --- family backends -------------------------------------------------------

fn as_1d(m: &Measure) -> &Measure1D {
    match m {
        Measure::One(g) => g,
        _ => unreachable!("family checked upstream"),
    }
}

fn as_grid(m: &Measure) -> &GridDensity {
    match m {
        Measure::Grid(g) => g,
        _ => unreachable!("family checked upstream"),
    }
}

fn as_product(m: &Measure) -> &ProductMeasure {
    match m {
        Measure::Product(p) => p,
        _ => unreachable!("family checked upstream"),
    }
}

fn grid_dim_error() -> Error {
    Error::Representation(
        "grid-density barycenters are supported in one dimension only; \
         use the gaussian/product/discrete families in higher dimension"
            .into(),
    )
}

/// Quantile values of `m` at the `len`-point midpoint grid. A measure already
/// on that grid returns its stored values bit-for-bit.
fn values_on_grid(m: &Measure1D, len: usize) -> Vec<f64> {
    if m.repr() == Repr1D::QuantileGrid && m.len() == len {
        return m.values().to_vec();
    }
    (0..len)
        .map(|k| m.quantile_unchecked((k as f64 + 0.5) / len as f64))
        .collect()
}

/// 1D step on γ's quantile grid: with τ = 1 the output values are exactly the
/// per-level means of the input quantiles (one-step convergence).
fn step_1d(gamma: &Measure1D, inputs: &[&Measure1D], tau: f64) -> Result<Measure1D> {
    let m = gamma.len();
    let ivals: Vec<Vec<f64>> = inputs.par_iter().map(|mu| values_on_grid(mu, m)).collect();
    let gvals = values_on_grid(gamma, m);
    let n = inputs.len() as f64;
    let out: Vec<f64> = (0..m)
        .map(|k| {
            let mean = ivals.iter().map(|v| v[k]).sum::<f64>() / n;
            if tau == 1.0 {
                mean
            } else {
                (1.0 - tau) * gvals[k] + tau * mean
            }
        })
        .collect();
    Measure1D::from_quantiles(out)
}

fn grad_sq_1d(gamma: &Measure1D, inputs: &[&Measure1D]) -> f64 {
    let m = gamma.len();
    let ivals: Vec<Vec<f64>> = inputs.par_iter().map(|mu| values_on_grid(mu, m)).collect();
    let gvals = values_on_grid(gamma, m);
    let n = inputs.len() as f64;
    (0..m)
        .map(|k| {
            let mean = ivals.iter().map(|v| v[k]).sum::<f64>() / n;
            (mean - gvals[k]) * (mean - gvals[k])
        })
        .sum::<f64>()
        / m as f64
}

/// T̄ = (1/N) Σᵢ tᵢ where tᵢ is the optimal linear map N(0,Γ) → N(0,Sᵢ).
fn mean_gaussian_map(gamma: &GaussianMeasure, inputs: &[Measure]) -> Result<DMatrix<f64>> {
    let d = gamma.dim();
    let maps: Result<Vec<DMatrix<f64>>> = inputs
        .par_iter()
        .map(|mu| {
            let g = match mu {
                Measure::Gaussian(g) => g,
                _ => unreachable!("family checked upstream"),
            };
            match optimal_map_gaussian(gamma, g)? {
                TransportMap::Linear(l) => Ok(l.matrix().clone()),
                _ => unreachable!("gaussian maps are linear"),
            }
        })
        .collect();
    let mut t_bar = DMatrix::zeros(d, d);
    for t in maps? {
        t_bar += t;
    }
    Ok(t_bar / inputs.len() as f64)
}

/// ∫‖(T̄−I)x‖² dN(0,Γ) = tr[(T̄−I) Γ (T̄−I)ᵀ].
fn gaussian_grad_sq(gamma: &GaussianMeasure, t_bar: &DMatrix<f64>) -> f64 {
    let d = gamma.dim();
    let diff = t_bar - DMatrix::identity(d, d);
    (&diff * gamma.covariance() * diff.transpose()).trace()
}

/// Per-input target points tᵢ(x_j) aligned with γ's support, via exact
/// assignments. Requires uniform measures of a common size.
fn assigned_targets(gamma: &DiscreteMeasure, inputs: &[Measure]) -> Result<Vec<Vec<Vec<f64>>>> {
    inputs
        .par_iter()
        .map(|mu| {
            let d = match mu {
                Measure::Discrete(d) => d,
                _ => unreachable!("family checked upstream"),
            };
            let (assign, _) = optimal_assignment(gamma, d)?;
            Ok((0..gamma.len())
                .map(|j| d.points()[assign.assign()[j]].clone())
                .collect())
        })
        .collect()
}

fn final_maps(gamma: &Measure, inputs: &[Measure]) -> Result<Vec<TransportMap>> {
    inputs.par_iter().map(|mu| optimal_map(gamma, mu)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Compactum;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m1(values: Vec<f64>) -> Measure {
        Measure::One(Measure1D::from_quantiles(values).unwrap())
    }

    #[test]
    fn objective_hand_values() {
        // single input equal to the candidate
        let a = m1(vec![0.0, 1.0, 2.0]);
        assert_eq!(frechet_objective(&a, &[a.clone()]).unwrap(), 0.0);

        // two point masses at 0 and 2, candidate at 1: (1/4)(1 + 1) = 0.5
        let p0 = Measure::One(Measure1D::point_mass(0.0));
        let p2 = Measure::One(Measure1D::point_mass(2.0));
        let p1 = Measure::One(Measure1D::point_mass(1.0));
        assert_relative_eq!(
            frechet_objective(&p1, &[p0, p2]).unwrap(),
            0.5,
            max_relative = 1e-12
        );

        // 1D Gaussians: σ ∈ {1,3}, candidate σ=2 → (1/4)(1² + 1²) = 0.5
        let g = |v: f64| Measure::Gaussian(GaussianMeasure::new(DMatrix::from_element(1, 1, v)).unwrap());
        assert_relative_eq!(
            frechet_objective(&g(4.0), &[g(1.0), g(9.0)]).unwrap(),
            0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gradient_hand_values() {
        let a = m1((0..64).map(|i| i as f64 / 63.0).collect());
        assert_eq!(
            frechet_gradient_norm_sq(&a, &[a.clone(), a.clone()]).unwrap(),
            0.0
        );

        // symmetric point masses about the candidate: maps average to identity
        let p0 = Measure::One(Measure1D::point_mass(0.0));
        let p2 = Measure::One(Measure1D::point_mass(2.0));
        let p1 = Measure::One(Measure1D::point_mass(1.0));
        assert_relative_eq!(
            frechet_gradient_norm_sq(&p1, &[p0, p2]).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        // Gaussians σ²∈{1,9} at γ=N(0,1): maps x, 3x average to 2x,
        // ∫(2x−x)² dN(0,1) = 1
        let g = |v: f64| Measure::Gaussian(GaussianMeasure::new(DMatrix::from_element(1, 1, v)).unwrap());
        assert_relative_eq!(
            frechet_gradient_norm_sq(&g(1.0), &[g(1.0), g(9.0)]).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn step_fixed_point_and_zero_step() {
        let a = m1(vec![-1.0, 0.0, 2.0, 5.0]);
        let same = procrustes_step(&a, &[a.clone(), a.clone()], 1.0).unwrap();
        assert_eq!(same, a);
        let b = m1(vec![0.0, 1.0, 2.0, 3.0]);
        let frozen = procrustes_step(&a, &[b], 0.0).unwrap();
        assert_eq!(frozen, a);
    }

    #[test]
    fn one_dimensional_step_is_quantile_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = 256;
        let inputs: Vec<Measure> = (0..4)
            .map(|_| {
                let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                m1(v)
            })
            .collect();
        let stepped = procrustes_step(&inputs[0], &inputs, 1.0).unwrap();
        let Measure::One(s) = &stepped else { panic!() };
        for k in 0..m {
            let mean = inputs
                .iter()
                .map(|i| as_1d(i).values()[k])
                .sum::<f64>()
                / inputs.len() as f64;
            // bit-level equality on the shared grid
            assert_eq!(s.values()[k], mean);
        }
        // and the step landed on a Karcher mean: next step is a no-op
        let again = procrustes_step(&stepped, &inputs, 1.0).unwrap();
        assert_eq!(again, stepped);
        assert_eq!(frechet_gradient_norm_sq(&stepped, &inputs).unwrap(), 0.0);
    }

    #[test]
    fn barycenter_single_input_returns_it() {
        let a = m1(vec![0.0, 0.5, 1.5]);
        let out = barycenter(&[a.clone()], &DescentConfig::default()).unwrap();
        assert_eq!(out.measure, a);
        assert_eq!(out.trace.records.len(), 1);
        assert!(out.trace.converged);
        assert_eq!(out.trace.records[0].grad_sq, 0.0);
    }

    #[test]
    fn one_dimensional_family_converges_in_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 128;
        let inputs: Vec<Measure> = (0..5)
            .map(|_| {
                let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                m1(v)
            })
            .collect();
        let out = barycenter(&inputs, &DescentConfig::default()).unwrap();
        assert!(out.trace.converged);
        assert_eq!(out.trace.iterations_used, 1);
        // objective nonincreasing along the trace
        for w in out.trace.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
    }

    #[test]
    fn gaussian_commuting_diagonals() {
        let g = |a: f64, b: f64| {
            GaussianMeasure::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                a, b,
            ])))
            .unwrap()
        };
        let (bary, trace) =
            gaussian_barycenter(&[g(1.0, 1.0), g(9.0, 9.0)], &DescentConfig::default()).unwrap();
        assert!(trace.converged);
        // square roots average: ((1+3)/2)² = 4
        assert_relative_eq!(bary.covariance()[(0, 0)], 4.0, max_relative = 1e-8);
        assert_relative_eq!(bary.covariance()[(1, 1)], 4.0, max_relative = 1e-8);

        let one =
            |v: f64| GaussianMeasure::new(DMatrix::from_element(1, 1, v)).unwrap();
        let (b1, _) = gaussian_barycenter(&[one(1.0), one(9.0)], &DescentConfig::default()).unwrap();
        assert_relative_eq!(b1.covariance()[(0, 0)], 4.0, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_identical_inputs_converge_immediately() {
        let s = GaussianMeasure::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let (bary, trace) =
            gaussian_barycenter(&[s.clone(), s.clone(), s.clone()], &DescentConfig::default())
                .unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations_used, 0);
        assert_relative_eq!(
            (bary.covariance() - s.covariance()).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn density_bound_examples() {
        let w = Compactum::unit(1);
        // four cells of width ¼; values sum to 4 for unit mass
        let grid =
            |v: [f64; 4]| GridDensity::new(w.clone(), vec![4], v.to_vec()).unwrap();
        let sup_one = grid([1.0, 1.0, 1.0, 1.0]);
        let sup_three = grid([3.0, 1.0, 0.0, 0.0]);
        // N=1: both branches reduce to the sup norm
        assert_relative_eq!(density_bound(&[grid([1.5, 1.5, 1.0, 0.0])]).unwrap(), 1.5);
        // N=2, d=1, sup-norms {1,3}: min{2·3, 2·1} = 2
        assert_relative_eq!(density_bound(&[sup_one, sup_three]).unwrap(), 2.0);
        // N=3, d=2, sup-norms all 1: min{3¹·1, 3²·1} = 3
        let w2 = Compactum::unit(2);
        let flat = GridDensity::uniform(w2, vec![4, 4]);
        assert_relative_eq!(
            density_bound(&[flat.clone(), flat.clone(), flat.clone()]).unwrap(),
            3.0
        );
    }

    #[test]
    fn karcher_residual_examples() {
        let a = m1(vec![0.0, 1.0]);
        let b = m1(vec![2.0, 3.0]);
        assert!(karcher_residual(&a, &[a.clone(), b.clone()]).unwrap() > 0.5);
        let cfg = DescentConfig {
            tolerance: 1e-8,
            ..DescentConfig::default()
        };
        let out = barycenter(&[a.clone(), b.clone()], &cfg).unwrap();
        assert!(karcher_residual(&out.measure, &[a, b]).unwrap() < 1e-8);
    }

    #[test]
    fn discrete_descent_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let m = 2 + rng.random_range(0..8usize);
            let inputs: Vec<Measure> = (0..3)
                .map(|_| {
                    let pts: Vec<Vec<f64>> = (0..m)
                        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                        .collect();
                    Measure::Discrete(DiscreteMeasure::uniform(pts).unwrap())
                })
                .collect();
            let out = barycenter(&inputs, &DescentConfig::default()).unwrap();
            for w in out.trace.records.windows(2) {
                // optimal-step descent: ΔF ≤ −½‖F′‖² up to quadrature slack
                assert!(w[1].objective - w[0].objective <= -0.5 * w[0].grad_sq + 1e-8);
            }
        }
    }

    #[test]
    fn product_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 64;
        let rand_1d = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Measure1D::from_quantiles(v).unwrap()
        };
        let inputs: Vec<Measure> = (0..3)
            .map(|_| {
                Measure::Product(
                    ProductMeasure::new(vec![
                        Measure::One(rand_1d(&mut rng)),
                        Measure::One(rand_1d(&mut rng)),
                    ])
                    .unwrap(),
                )
            })
            .collect();
        let out = barycenter(&inputs, &DescentConfig::default()).unwrap();
        let Measure::Product(p) = &out.measure else { panic!() };
        for k in 0..2 {
            let fac_inputs: Vec<Measure> = inputs
                .iter()
                .map(|mm| as_product(mm).factors()[k].clone())
                .collect();
            let fac_out = barycenter(&fac_inputs, &DescentConfig::default()).unwrap();
            let d = wasserstein2_sq(&p.factors()[k], &fac_out.measure).unwrap();
            assert!(d.sqrt() <= 1e-8, "factor {k} mismatch {d}");
        }
    }

    #[test]
    fn mixed_families_rejected() {
        let a = m1(vec![0.0, 1.0]);
        let g = Measure::Gaussian(GaussianMeasure::standard(1));
        assert!(matches!(
            barycenter(&[a, g], &DescentConfig::default()),
            Err(Error::Representation(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad_tau = DescentConfig {
            tau: 1.5,
            ..DescentConfig::default()
        };
        assert!(bad_tau.validate().is_err());
        let bad_tol = DescentConfig {
            tolerance: 0.0,
            ..DescentConfig::default()
        };
        assert!(bad_tol.validate().is_err());
    }
}
