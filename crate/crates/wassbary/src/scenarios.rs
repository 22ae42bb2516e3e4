//! Seeded figure-data scenarios: randomized input families, their barycenter,
//! and displacement fields, emitted as CSV for external plotting.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::barycenter::{barycenter, gaussian_barycenter, DescentConfig};
use crate::error::{Error, Result};
use crate::measures::{Compactum, GaussianMeasure, GridDensity, Measure, ProductMeasure};
use crate::serialize::{displacement_csv, grid_to_csv};
use crate::transport::{optimal_map_gaussian, TransportMap};

pub const SCENARIOS: [&str; 5] = ["1d-mixtures", "product", "copula", "gaussian", "trivariate"];

const N_INPUTS: usize = 4;
const GRID_1D: usize = 256;
const GRID_2D: usize = 64;

/// Run one named scenario and return the list of files written.
pub fn run_scenario(name: &str, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    match name {
        "1d-mixtures" => scenario_1d_mixtures(seed, out_dir),
        "product" => scenario_product(seed, out_dir),
        "copula" => scenario_copula(seed, out_dir),
        "gaussian" => scenario_gaussian(seed, out_dir),
        "trivariate" => scenario_trivariate(seed, out_dir),
        other => Err(Error::Domain(format!(
            "unknown scenario '{other}'; expected one of {}",
            SCENARIOS.join(", ")
        ))),
    }
}

// --- random density families ------------------------------------------------

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Bimodal Gaussian mixture: ½φ((x−m₁)/σ₁) + ½φ((x−m₂)/σ₂) with
/// m₁ ∼ U[−13,−3], m₂ ∼ U[3,13], σ ∼ Gamma(4, rate 4).
#[derive(Debug, Clone, Copy)]
struct BimodalGauss {
    m1: f64,
    m2: f64,
    s1: f64,
    s2: f64,
}

impl BimodalGauss {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let gamma = Gamma::new(4.0, 0.25).expect("valid shape/scale");
        BimodalGauss {
            m1: rng.random_range(-13.0..-3.0),
            m2: rng.random_range(3.0..13.0),
            s1: gamma.sample(rng),
            s2: gamma.sample(rng),
        }
    }

    fn density(&self, x: f64) -> f64 {
        0.5 * phi((x - self.m1) / self.s1) / self.s1 + 0.5 * phi((x - self.m2) / self.s2) / self.s2
    }
}

/// Shifted-gamma / Gaussian mixture:
/// (3/5)·(β³/Γ(3))(x−m₃)²e^{−β(x−m₃)} + (2/5)·φ(x−m₄) with
/// β ∼ Gamma(4, rate 1), m₃ ∼ U[1,4], m₄ ∼ U[−4,−1].
#[derive(Debug, Clone, Copy)]
struct GammaGauss {
    beta: f64,
    m3: f64,
    m4: f64,
}

impl GammaGauss {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let gamma = Gamma::new(4.0, 1.0).expect("valid shape/scale");
        GammaGauss {
            beta: gamma.sample(rng),
            m3: rng.random_range(1.0..4.0),
            m4: rng.random_range(-4.0..-1.0),
        }
    }

    fn density(&self, x: f64) -> f64 {
        let z = x - self.m3;
        let gamma_part = if z > 0.0 {
            // Γ(3) = 2
            self.beta.powi(3) / 2.0 * z * z * (-self.beta * z).exp()
        } else {
            0.0
        };
        0.6 * gamma_part + 0.4 * phi(x - self.m4)
    }
}

fn window_1d() -> Compactum {
    Compactum::new(vec![-20.0], vec![20.0]).expect("static bounds")
}

fn grid_of(f: impl Fn(f64) -> f64) -> Result<GridDensity> {
    GridDensity::from_fn(window_1d(), vec![GRID_1D], |x| f(x[0]))
}

/// 2 × 2 Wishart(I₂, 2) draw: Σ_{k≤2} z_k z_kᵀ with z_k ∼ N(0, I₂),
/// regularized away from singularity.
fn wishart_2x2(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2, 2);
    for _ in 0..2 {
        let z = DMatrix::from_fn(2, 1, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        });
        s += &z * z.transpose();
    }
    s + DMatrix::identity(2, 2) * 1e-6
}

fn write(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

// --- scenarios ----------------------------------------------------------------

fn scenario_1d_mixtures(seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Result<Vec<Measure>> = (0..N_INPUTS)
        .map(|_| {
            let f = BimodalGauss::sample(&mut rng);
            Ok(Measure::Grid(grid_of(|x| f.density(x))?))
        })
        .collect();
    let inputs = inputs?;
    let out = barycenter(&inputs, &DescentConfig::default())?;

    let mut files = Vec::new();
    for (i, m) in inputs.iter().enumerate() {
        let Measure::Grid(g) = m else { unreachable!() };
        files.push(write(out_dir, &format!("input_{i}.csv"), &grid_to_csv(g))?);
    }
    let Measure::Grid(bary) = &out.measure else { unreachable!() };
    files.push(write(out_dir, "barycenter.csv", &grid_to_csv(bary))?);
    let nodes: Vec<Vec<f64>> = (0..bary.n_cells()).map(|i| bary.cell_center(i)).collect();
    for (i, t) in out.maps.iter().enumerate() {
        files.push(write(
            out_dir,
            &format!("map_{i}.csv"),
            &displacement_csv(t, &nodes)?,
        )?);
    }
    Ok(files)
}

fn scenario_product(seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factor_grids = Vec::with_capacity(N_INPUTS);
    for _ in 0..N_INPUTS {
        let fx = BimodalGauss::sample(&mut rng);
        let fy = GammaGauss::sample(&mut rng);
        factor_grids.push((grid_of(|x| fx.density(x))?, grid_of(|y| fy.density(y))?));
    }
    let inputs: Result<Vec<Measure>> = factor_grids
        .iter()
        .map(|(gx, gy)| {
            Ok(Measure::Product(ProductMeasure::new(vec![
                Measure::Grid(gx.clone()),
                Measure::Grid(gy.clone()),
            ])?))
        })
        .collect();
    let inputs = inputs?;
    let out = barycenter(&inputs, &DescentConfig::default())?;

    let mut files = Vec::new();
    for (i, (gx, gy)) in factor_grids.iter().enumerate() {
        files.push(write(
            out_dir,
            &format!("input_{i}.csv"),
            &grid_to_csv(&product_density_2d(gx, gy)?),
        )?);
    }
    let Measure::Product(p) = &out.measure else { unreachable!() };
    let (Measure::Grid(bx), Measure::Grid(by)) = (&p.factors()[0], &p.factors()[1]) else {
        unreachable!()
    };
    files.push(write(
        out_dir,
        "barycenter.csv",
        &grid_to_csv(&product_density_2d(bx, by)?),
    )?);
    let nodes = plane_nodes(&window_1d(), 32);
    for (i, t) in out.maps.iter().enumerate() {
        files.push(write(
            out_dir,
            &format!("map_{i}.csv"),
            &displacement_csv(t, &nodes)?,
        )?);
    }
    Ok(files)
}

/// Coarse 2D product density for plotting.
fn product_density_2d(gx: &GridDensity, gy: &GridDensity) -> Result<GridDensity> {
    let window = Compactum::new(
        vec![gx.window().lower[0], gy.window().lower[0]],
        vec![gx.window().upper[0], gy.window().upper[0]],
    )?;
    GridDensity::from_fn(window, vec![GRID_2D, GRID_2D], |p| {
        density_at(gx, p[0]) * density_at(gy, p[1])
    })
}

fn density_at(g: &GridDensity, x: f64) -> f64 {
    let idx = g.cell_of(&[x]);
    g.values()[idx]
}

/// Midpoint CDF of a 1D grid density at x.
fn cdf_at(g: &GridDensity, x: f64) -> f64 {
    let w = (g.window().upper[0] - g.window().lower[0]) / g.n_cells() as f64;
    let mut acc = 0.0;
    for idx in 0..g.n_cells() {
        let c = g.cell_center(idx)[0];
        if x < c - 0.5 * w {
            break;
        }
        let covered = ((x - (c - 0.5 * w)) / w).clamp(0.0, 1.0);
        acc += g.values()[idx] * w * covered;
    }
    acc.clamp(0.0, 1.0)
}

/// Frank copula density with parameter θ.
fn frank_density(theta: f64, u: f64, v: f64) -> f64 {
    let u = u.clamp(1e-9, 1.0 - 1e-9);
    let v = v.clamp(1e-9, 1.0 - 1e-9);
    let e = |t: f64| (-theta * t).exp();
    let denom = (1.0 - e(1.0)) - (1.0 - e(u)) * (1.0 - e(v));
    theta * (1.0 - e(1.0)) * e(u + v) / (denom * denom)
}

fn scenario_copula(seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    const THETA: f64 = -8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marginals = Vec::with_capacity(N_INPUTS);
    for _ in 0..N_INPUTS {
        let fx = BimodalGauss::sample(&mut rng);
        let fy = GammaGauss::sample(&mut rng);
        marginals.push((grid_of(|x| fx.density(x))?, grid_of(|y| fy.density(y))?));
    }
    // common-copula family: marginals move, the copula is invariant, and the
    // optimal maps are separable — the barycenter has the same copula with
    // the marginal barycenters as marginals
    let xs: Vec<Measure> = marginals.iter().map(|(gx, _)| Measure::Grid(gx.clone())).collect();
    let ys: Vec<Measure> = marginals.iter().map(|(_, gy)| Measure::Grid(gy.clone())).collect();
    let bx = barycenter(&xs, &DescentConfig::default())?;
    let by = barycenter(&ys, &DescentConfig::default())?;
    let (Measure::Grid(bxg), Measure::Grid(byg)) = (&bx.measure, &by.measure) else {
        unreachable!()
    };

    let mut files = Vec::new();
    for (i, (gx, gy)) in marginals.iter().enumerate() {
        files.push(write(
            out_dir,
            &format!("input_{i}.csv"),
            &grid_to_csv(&copula_density_2d(THETA, gx, gy)?),
        )?);
    }
    files.push(write(
        out_dir,
        "barycenter.csv",
        &grid_to_csv(&copula_density_2d(THETA, bxg, byg)?),
    )?);
    let nodes = plane_nodes(&window_1d(), 32);
    for i in 0..N_INPUTS {
        let t = TransportMap::Product(crate::transport::ProductMap::new(vec![
            bx.maps[i].clone(),
            by.maps[i].clone(),
        ])?);
        files.push(write(
            out_dir,
            &format!("map_{i}.csv"),
            &displacement_csv(&t, &nodes)?,
        )?);
    }
    Ok(files)
}

fn copula_density_2d(theta: f64, gx: &GridDensity, gy: &GridDensity) -> Result<GridDensity> {
    let window = Compactum::new(
        vec![gx.window().lower[0], gy.window().lower[0]],
        vec![gx.window().upper[0], gy.window().upper[0]],
    )?;
    GridDensity::from_fn(window, vec![GRID_2D, GRID_2D], |p| {
        frank_density(theta, cdf_at(gx, p[0]), cdf_at(gy, p[1]))
            * density_at(gx, p[0])
            * density_at(gy, p[1])
    })
}

fn scenario_gaussian(seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Result<Vec<GaussianMeasure>> = (0..N_INPUTS)
        .map(|_| GaussianMeasure::new(wishart_2x2(&mut rng)))
        .collect();
    let inputs = inputs?;
    let cfg = DescentConfig {
        initial: Some(Measure::Gaussian(GaussianMeasure::standard(2))),
        ..DescentConfig::default()
    };
    let (bary, trace) = gaussian_barycenter(&inputs, &cfg)?;

    let mut files = Vec::new();
    for (i, g) in inputs.iter().enumerate() {
        files.push(write(
            out_dir,
            &format!("covariance_{i}.csv"),
            &matrix_csv(g.covariance()),
        )?);
    }
    files.push(write(out_dir, "barycenter_covariance.csv", &matrix_csv(bary.covariance()))?);
    files.push(write(out_dir, "trace.csv", &trace.to_csv())?);

    // registration vector fields t(x) − x over a plane grid
    let window = Compactum::new(vec![-4.0, -4.0], vec![4.0, 4.0])?;
    let nodes = plane_nodes_2d(&window, 15);
    for (i, g) in inputs.iter().enumerate() {
        let t = optimal_map_gaussian(&bary, g)?;
        files.push(write(
            out_dir,
            &format!("map_{i}.csv"),
            &displacement_csv(&t, &nodes)?,
        )?);
    }
    Ok(files)
}

fn scenario_trivariate(seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    const SAMPLES: usize = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal_3x3(&mut rng);

    let mut gaussians = Vec::with_capacity(N_INPUTS);
    let mut f_grids = Vec::with_capacity(N_INPUTS);
    for _ in 0..N_INPUTS {
        gaussians.push(GaussianMeasure::new(wishart_2x2(&mut rng))?);
        let f = BimodalGauss::sample(&mut rng);
        f_grids.push(grid_of(|x| f.density(x))?);
    }

    // the rotated product structure is shared, so the barycenter is the
    // rotation of (gaussian barycenter) ⊗ (1D barycenter)
    let (bary_g, _) = gaussian_barycenter(&gaussians, &DescentConfig::default())?;
    let f_measures: Vec<Measure> = f_grids.iter().map(|g| Measure::Grid(g.clone())).collect();
    let bary_f = barycenter(&f_measures, &DescentConfig::default())?;
    let Measure::Grid(bary_fg) = &bary_f.measure else { unreachable!() };

    let mut files = Vec::new();
    for i in 0..N_INPUTS {
        let pts = sample_rotated(&u, &gaussians[i], &f_grids[i], SAMPLES, &mut rng)?;
        files.push(write(out_dir, &format!("sample_{i}.csv"), &points_csv(&pts))?);
    }
    let pts = sample_rotated(&u, &bary_g, bary_fg, SAMPLES, &mut rng)?;
    files.push(write(out_dir, "barycenter_sample.csv", &points_csv(&pts))?);
    files.push(write(out_dir, "rotation.csv", &matrix_csv(&u))?);
    Ok(files)
}

/// Draws from U#(N(0,S) ⊗ f): rotate a Gaussian plane sample joined with a
/// 1D draw from f.
fn sample_rotated(
    u: &DMatrix<f64>,
    s: &GaussianMeasure,
    f: &GridDensity,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let gauss = Measure::Gaussian(s.clone());
    let planar = gauss.sample_points(n, rng)?;
    let line = Measure::Grid(f.clone()).sample_points(n, rng)?;
    Ok(planar
        .iter()
        .zip(&line)
        .map(|(xy, z)| {
            let w = nalgebra::DVector::from_vec(vec![xy[0], xy[1], z[0]]);
            (u * w).iter().cloned().collect()
        })
        .collect())
}

fn random_orthogonal_3x3(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(3, 3, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    let qr = a.qr();
    qr.q()
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn points_csv(points: &[Vec<f64>]) -> String {
    let d = points.first().map_or(0, |p| p.len());
    let mut s = (0..d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// n × n probe nodes over the square window × window (1D windows).
fn plane_nodes(axis: &Compactum, n: usize) -> Vec<Vec<f64>> {
    let window = Compactum::new(
        vec![axis.lower[0], axis.lower[0]],
        vec![axis.upper[0], axis.upper[0]],
    )
    .expect("static bounds");
    plane_nodes_2d(&window, n)
}

fn plane_nodes_2d(window: &Compactum, n: usize) -> Vec<Vec<f64>> {
    let mut nodes = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let fx = (i as f64 + 0.5) / n as f64;
            let fy = (j as f64 + 0.5) / n as f64;
            nodes.push(vec![
                window.lower[0] + fx * (window.upper[0] - window.lower[0]),
                window.lower[1] + fy * (window.upper[1] - window.lower[1]),
            ]);
        }
    }
    nodes
}
