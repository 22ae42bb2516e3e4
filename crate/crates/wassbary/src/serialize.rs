//! JSON and CSV interchange. Deserialization goes through the validating
//! constructors, so on-disk data cannot bypass the type invariants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::barycenter::DescentConfig;
use crate::error::{Error, Result};
use crate::measures::{
    Compactum, DiscreteMeasure, GaussianMeasure, GridDensity, Measure, Measure1D, ProductMeasure,
    Repr1D,
};
use crate::transport::{Assignment, GridMap, LinearMap, Monotone1D, ProductMap, TransportMap};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum MeasureDto {
    Quantile1d {
        values: Vec<f64>,
        #[serde(default = "default_repr")]
        repr: Repr1D,
    },
    Gaussian {
        covariance: Vec<Vec<f64>>,
    },
    Product {
        factors: Vec<MeasureDto>,
    },
    Discrete {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Grid {
        window: Compactum,
        cells_per_axis: Vec<usize>,
        values: Vec<f64>,
    },
}

fn default_repr() -> Repr1D {
    Repr1D::QuantileGrid
}

fn measure_to_dto(m: &Measure) -> MeasureDto {
    match m {
        Measure::One(q) => MeasureDto::Quantile1d {
            values: q.values().to_vec(),
            repr: q.repr(),
        },
        Measure::Gaussian(g) => MeasureDto::Gaussian {
            covariance: matrix_rows(g.covariance()),
        },
        Measure::Product(p) => MeasureDto::Product {
            factors: p.factors().iter().map(measure_to_dto).collect(),
        },
        Measure::Discrete(d) => MeasureDto::Discrete {
            points: d.points().to_vec(),
            weights: d.weights().to_vec(),
        },
        Measure::Grid(g) => MeasureDto::Grid {
            window: g.window().clone(),
            cells_per_axis: g.cells_per_axis().to_vec(),
            values: g.values().to_vec(),
        },
    }
}

fn measure_from_dto(dto: MeasureDto) -> Result<Measure> {
    Ok(match dto {
        MeasureDto::Quantile1d { values, repr } => Measure::One(match repr {
            Repr1D::QuantileGrid => Measure1D::from_quantiles(values)?,
            Repr1D::Sample => Measure1D::from_sample(values)?,
        }),
        MeasureDto::Gaussian { covariance } => {
            Measure::Gaussian(GaussianMeasure::new(matrix_from_rows(&covariance)?)?)
        }
        MeasureDto::Product { factors } => {
            let fs: Result<Vec<Measure>> = factors.into_iter().map(measure_from_dto).collect();
            Measure::Product(ProductMeasure::new(fs?)?)
        }
        MeasureDto::Discrete { points, weights } => {
            Measure::Discrete(DiscreteMeasure::weighted(points, weights)?)
        }
        MeasureDto::Grid {
            window,
            cells_per_axis,
            values,
        } => Measure::Grid(GridDensity::new(window, cells_per_axis, values)?),
    })
}

pub fn measure_to_json(m: &Measure) -> String {
    serde_json::to_string_pretty(&measure_to_dto(m)).expect("measure serialization is total")
}

pub fn measure_from_json(s: &str) -> Result<Measure> {
    let dto: MeasureDto =
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("measure JSON: {e}")))?;
    measure_from_dto(dto)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum MapDto {
    Monotone1d { x: Vec<f64>, y: Vec<f64> },
    Linear { matrix: Vec<Vec<f64>> },
    Product { factors: Vec<MapDto> },
    Assignment {
        source: Vec<Vec<f64>>,
        target: Vec<Vec<f64>>,
        assign: Vec<usize>,
    },
    Gridmap {
        window: Compactum,
        cells_per_axis: Vec<usize>,
        displacement: Vec<Vec<f64>>,
    },
}

fn map_to_dto(t: &TransportMap) -> MapDto {
    match t {
        TransportMap::Monotone1D(f) => {
            let (x, y) = f.knots();
            MapDto::Monotone1d {
                x: x.to_vec(),
                y: y.to_vec(),
            }
        }
        TransportMap::Linear(l) => MapDto::Linear {
            matrix: matrix_rows(l.matrix()),
        },
        TransportMap::Product(p) => MapDto::Product {
            factors: p.factors().iter().map(map_to_dto).collect(),
        },
        TransportMap::Assignment(a) => MapDto::Assignment {
            source: a.source().to_vec(),
            target: a.target().to_vec(),
            assign: a.assign().to_vec(),
        },
        TransportMap::GridMap(g) => MapDto::Gridmap {
            window: g.window.clone(),
            cells_per_axis: g.cells_per_axis.clone(),
            displacement: g.displacement.clone(),
        },
    }
}

fn map_from_dto(dto: MapDto) -> Result<TransportMap> {
    Ok(match dto {
        MapDto::Monotone1d { x, y } => TransportMap::Monotone1D(Monotone1D::new(x, y)?),
        MapDto::Linear { matrix } => {
            TransportMap::Linear(LinearMap::new(matrix_from_rows(&matrix)?)?)
        }
        MapDto::Product { factors } => {
            let fs: Result<Vec<TransportMap>> = factors.into_iter().map(map_from_dto).collect();
            TransportMap::Product(ProductMap::new(fs?)?)
        }
        MapDto::Assignment {
            source,
            target,
            assign,
        } => TransportMap::Assignment(Assignment::new(source, target, assign)?),
        MapDto::Gridmap {
            window,
            cells_per_axis,
            displacement,
        } => TransportMap::GridMap(GridMap {
            window,
            cells_per_axis,
            displacement,
        }),
    })
}

pub fn map_to_json(t: &TransportMap) -> String {
    serde_json::to_string_pretty(&map_to_dto(t)).expect("map serialization is total")
}

pub fn map_from_json(s: &str) -> Result<TransportMap> {
    let dto: MapDto =
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("transport map JSON: {e}")))?;
    map_from_dto(dto)
}

#[derive(Serialize, Deserialize)]
struct ConfigDto {
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_max_iterations")]
    max_iterations: usize,
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default)]
    initial: Option<MeasureDto>,
}

fn default_tolerance() -> f64 {
    1e-6
}
fn default_max_iterations() -> usize {
    200
}
fn default_tau() -> f64 {
    1.0
}

pub fn config_to_json(cfg: &DescentConfig) -> String {
    let dto = ConfigDto {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        tau: cfg.tau,
        initial: cfg.initial.as_ref().map(measure_to_dto),
    };
    serde_json::to_string_pretty(&dto).expect("config serialization is total")
}

pub fn config_from_json(s: &str) -> Result<DescentConfig> {
    let dto: ConfigDto =
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("config JSON: {e}")))?;
    let cfg = DescentConfig {
        tolerance: dto.tolerance,
        max_iterations: dto.max_iterations,
        tau: dto.tau,
        initial: dto.initial.map(measure_from_dto).transpose()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Shape("matrix rows must be nonempty and rectangular".into()));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

/// One row per cell: axis coordinates of the cell center, then the density.
pub fn grid_to_csv(g: &GridDensity) -> String {
    let d = g.dim();
    let mut s: String = (0..d)
        .map(|k| format!("x{k},"))
        .chain(std::iter::once("density\n".to_string()))
        .collect();
    for idx in 0..g.n_cells() {
        for c in g.cell_center(idx) {
            s.push_str(&format!("{c},"));
        }
        s.push_str(&format!("{}\n", g.values()[idx]));
    }
    s
}

/// One row per evaluation node: coordinates, then the displacement t(x) − x.
pub fn displacement_csv(t: &TransportMap, nodes: &[Vec<f64>]) -> Result<String> {
    let d = nodes.first().map_or(0, |n| n.len());
    let mut s: String = (0..d)
        .map(|k| format!("x{k},"))
        .chain((0..d).map(|k| {
            if k + 1 == d {
                format!("dx{k}\n")
            } else {
                format!("dx{k},")
            }
        }))
        .collect();
    for x in nodes {
        let y = t.apply(x)?;
        for v in x {
            s.push_str(&format!("{v},"));
        }
        let row: Vec<String> = y.iter().zip(x).map(|(b, a)| format!("{}", b - a)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// One row per point.
pub fn pattern_to_csv(p: &crate::measures::PointPattern) -> String {
    let d = p.window.dim();
    let mut s = (0..d)
        .map(|k| format!("x{k}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for pt in &p.points {
        let row: Vec<String> = pt.iter().map(|v| format!("{v}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
