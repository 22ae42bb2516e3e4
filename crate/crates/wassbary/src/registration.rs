//! Optimal multicoupling through the barycenter, map inversion, and
//! registration of point patterns into the common coordinate system.

use crate::barycenter::{barycenter, DescentConfig};
use crate::error::{Error, Result};
use crate::linalg::matrix_inv_spd;
use crate::measures::{Compactum, DiscreteMeasure, Measure, PointPattern};
use crate::transport::{
    sq_dist, Assignment, LinearMap, ProductMap, TransportMap,
};

/// Exhaustive-search budget for the exact discrete multicoupling: the number
/// of permutation tuples (M!)^(N−1) must stay below this.
const ENUMERATION_BUDGET: usize = 50_000;

/// Multicoupled representation: a reference measure γ̄ with one Procrustes map
/// per input, realizing the coupling Xᵢ = tⁱ(Z), Z ∼ γ̄.
#[derive(Debug, Clone)]
pub struct Multicoupling {
    pub barycenter: Measure,
    pub maps: Vec<TransportMap>,
    /// Σ_{i<j} ∫‖tⁱ(z) − tʲ(z)‖² dγ̄(z), by the family quadrature.
    pub pairwise_cost: f64,
}

/// Couple N ≥ 2 measures through their barycenter.
///
/// Tiny uniform discrete instances are solved exactly by enumerating all
/// permutation tuples; the coupling routed through a non-global Karcher mean
/// need not be optimal there, and exhaustion is cheap.
pub fn multicoupling(inputs: &[Measure], cfg: &DescentConfig) -> Result<Multicoupling> {
    if inputs.len() < 2 {
        return Err(Error::Domain(format!(
            "multicoupling needs at least two measures, got {}",
            inputs.len()
        )));
    }
    if let Some(mc) = discrete_exact_multicoupling(inputs)? {
        return Ok(mc);
    }
    let out = barycenter(inputs, cfg)?;
    let pairwise_cost = pairwise_cost(&out.measure, &out.maps)?;
    Ok(Multicoupling {
        barycenter: out.measure,
        maps: out.maps,
        pairwise_cost,
    })
}

/// Σ_{i<j} ∫‖tⁱ(z) − tʲ(z)‖² dγ̄(z) on γ̄'s representation nodes, where the
/// maps are exact.
pub fn pairwise_cost(gamma: &Measure, maps: &[TransportMap]) -> Result<f64> {
    // Gaussians integrate in closed form: tr[(Tᵢ−Tⱼ) Γ (Tᵢ−Tⱼ)ᵀ]
    if let Measure::Gaussian(g) = gamma {
        let mats: Result<Vec<_>> = maps
            .iter()
            .map(|t| match t {
                TransportMap::Linear(l) => Ok(l.matrix().clone()),
                other => Err(Error::Representation(format!(
                    "gaussian multicoupling expects linear maps, got {}",
                    other.kind_name()
                ))),
            })
            .collect();
        let mats = mats?;
        let mut total = 0.0;
        for i in 0..mats.len() {
            for j in (i + 1)..mats.len() {
                let diff = &mats[i] - &mats[j];
                total += (&diff * g.covariance() * diff.transpose()).trace();
            }
        }
        return Ok(total);
    }
    let (nodes, weights) = quadrature_nodes(gamma)?;
    let images: Result<Vec<Vec<Vec<f64>>>> = maps
        .iter()
        .map(|t| nodes.iter().map(|z| t.apply(z)).collect())
        .collect();
    let images = images?;
    let mut total = 0.0;
    for i in 0..images.len() {
        for j in (i + 1)..images.len() {
            for (k, w) in weights.iter().enumerate() {
                total += w * sq_dist(&images[i][k], &images[j][k]);
            }
        }
    }
    Ok(total)
}

/// Representation nodes of γ̄ with their quadrature weights.
fn quadrature_nodes(gamma: &Measure) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    match gamma {
        Measure::One(m) => {
            let w = 1.0 / m.len() as f64;
            Ok((
                m.values().iter().map(|&v| vec![v]).collect(),
                vec![w; m.len()],
            ))
        }
        Measure::Discrete(d) => Ok((d.points().to_vec(), d.weights().to_vec())),
        Measure::Grid(g) if g.dim() == 1 => {
            let q = g.to_measure1d(crate::measures::DEFAULT_QUANTILE_GRID)?;
            let w = 1.0 / q.len() as f64;
            Ok((
                q.values().iter().map(|&v| vec![v]).collect(),
                vec![w; q.len()],
            ))
        }
        Measure::Product(p) => {
            // tensor grid over the factor nodes would blow up; product maps
            // act coordinatewise, so pairwise costs add over factors and the
            // caller handles products by splitting. Reaching this point means
            // a non-product map was paired with a product measure.
            Err(Error::Representation(format!(
                "no quadrature nodes for {}-factor product measures; \
                 split into factors first",
                p.factors().len()
            )))
        }
        other => Err(Error::Representation(format!(
            "no quadrature nodes for family {}",
            other.family_name()
        ))),
    }
}

/// Exact multicoupling for small uniform discrete inputs of a common size:
/// enumerate permutation alignments of inputs 2..N against input 1, score
/// each by the total pairwise cost, and keep the minimizer.
fn discrete_exact_multicoupling(inputs: &[Measure]) -> Result<Option<Multicoupling>> {
    let mut discretes = Vec::with_capacity(inputs.len());
    for m in inputs {
        match m {
            Measure::Discrete(d) if d.is_uniform() => discretes.push(d),
            _ => return Ok(None),
        }
    }
    let m = discretes[0].len();
    if discretes.iter().any(|d| d.len() != m) {
        return Ok(None);
    }
    let n = discretes.len();
    let tuples = factorial(m).checked_pow((n - 1) as u32);
    if tuples.is_none() || tuples.unwrap() > ENUMERATION_BUDGET {
        return Ok(None);
    }

    let perms = permutations(m);
    // choice[i] indexes the permutation applied to input i+1
    let mut choice = vec![0usize; n - 1];
    let mut best_choice = choice.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let mut cost = 0.0;
        for j in 0..m {
            for a in 0..n {
                let pa = aligned_point(discretes[a], &perms, &choice, a, j);
                for b in (a + 1)..n {
                    let pb = aligned_point(discretes[b], &perms, &choice, b, j);
                    cost += sq_dist(pa, pb);
                }
            }
        }
        cost /= m as f64;
        if cost < best_cost {
            best_cost = cost;
            best_choice = choice.clone();
        }
        // odometer over permutation indices
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                break;
            }
            choice[pos] += 1;
            if choice[pos] < perms.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
        if pos == choice.len() {
            break;
        }
    }

    // barycenter support: coordinatewise means of the aligned tuples
    let dim = discretes[0].dim();
    let mut bary_pts = Vec::with_capacity(m);
    for j in 0..m {
        let mut p = vec![0.0; dim];
        for a in 0..n {
            let pa = aligned_point(discretes[a], &perms, &best_choice, a, j);
            for (c, &v) in pa.iter().enumerate() {
                p[c] += v / n as f64;
            }
        }
        bary_pts.push(p);
    }
    let bary = DiscreteMeasure::uniform(bary_pts.clone())?;
    let maps: Result<Vec<TransportMap>> = (0..n)
        .map(|a| {
            let assign: Vec<usize> = (0..m)
                .map(|j| if a == 0 { j } else { perms[best_choice[a - 1]][j] })
                .collect();
            Ok(TransportMap::Assignment(Assignment::new(
                bary_pts.clone(),
                discretes[a].points().to_vec(),
                assign,
            )?))
        })
        .collect();
    Ok(Some(Multicoupling {
        barycenter: Measure::Discrete(bary),
        maps: maps?,
        pairwise_cost: best_cost,
    }))
}

fn aligned_point<'a>(
    d: &'a DiscreteMeasure,
    perms: &[Vec<usize>],
    choice: &[usize],
    input_index: usize,
    j: usize,
) -> &'a [f64] {
    let idx = if input_index == 0 {
        j
    } else {
        perms[choice[input_index - 1]][j]
    };
    &d.points()[idx]
}

fn factorial(m: usize) -> usize {
    (1..=m).product::<usize>().max(1)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..m).collect();
    heap_permute(&mut cur, m, &mut out);
    out.sort();
    out
}

fn heap_permute(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permute(cur, k - 1, out);
        if k % 2 == 0 {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
}

/// Exact family inverse of a transport map.
pub fn invert_map(t: &TransportMap) -> Result<TransportMap> {
    match t {
        TransportMap::Monotone1D(f) => Ok(TransportMap::Monotone1D(f.invert()?)),
        TransportMap::Linear(l) => Ok(TransportMap::Linear(LinearMap::new(matrix_inv_spd(
            l.matrix(),
        )?)?)),
        TransportMap::Product(p) => {
            let factors: Result<Vec<TransportMap>> = p.factors().iter().map(invert_map).collect();
            Ok(TransportMap::Product(ProductMap::new(factors?)?))
        }
        TransportMap::Assignment(a) => Ok(TransportMap::Assignment(a.invert()?)),
        TransportMap::GridMap(_) => Err(Error::Representation(
            "grid displacement maps have no exact inverse".into(),
        )),
    }
}

/// Push every point of a pattern through a map. The window is unchanged;
/// mapped points are clamped onto it so the pattern stays valid under the
/// extrapolation rule.
pub fn register_pattern(p: &PointPattern, t_inv: &TransportMap) -> Result<PointPattern> {
    let window = p.window.clone();
    let points: Result<Vec<Vec<f64>>> = p
        .points
        .iter()
        .map(|x| {
            let mut y = t_inv.apply(x)?;
            for (c, v) in y.iter_mut().enumerate() {
                *v = v.clamp(window.lower[c], window.upper[c]);
            }
            Ok(y)
        })
        .collect();
    PointPattern::new(window, points?)
}

/// sup over the probe grid of ‖est(x) − truth(x)‖.
pub fn registration_error(
    est: &TransportMap,
    truth: &TransportMap,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for x in probes {
        let a = est.apply(x)?;
        let b = truth.apply(x)?;
        sup = sup.max(sq_dist(&a, &b).sqrt());
    }
    Ok(sup)
}

/// Default probe grid: `per_axis`^d points on the window shrunk by 10% per
/// side, keeping the probes strictly interior.
pub fn default_probe_grid(window: &Compactum, per_axis: usize) -> Vec<Vec<f64>> {
    let inner = window.shrink(0.1);
    let d = inner.dim();
    let mut probes = vec![vec![]];
    for c in 0..d {
        let lo = inner.lower[c];
        let hi = inner.upper[c];
        let mut next = Vec::with_capacity(probes.len() * per_axis);
        for p in &probes {
            for k in 0..per_axis {
                let t = if per_axis == 1 {
                    0.5
                } else {
                    k as f64 / (per_axis - 1) as f64
                };
                let mut q = p.clone();
                q.push(lo + t * (hi - lo));
                next.push(q);
            }
        }
        probes = next;
    }
    probes
}
