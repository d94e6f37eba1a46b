//! Vanilla input-gradient saliency: `dS_c/dX`, importance maps, normalization,
//! 2D projections/slices and per-form rank bands.

mod export;

pub use export::{bands_to_grid, field_to_grid, matrix_csv, matrix_pgm};

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::model::{argmax_rows, Network};
use crate::nn::Tensor;
use crate::Label;

/// Real-valued 3D field indexed like [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} values for dims {dims:?}", data.len())));
        }
        Ok(ScalarField { dims, data })
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceMode {
    Abs,
    Square,
}

impl std::str::FromStr for ImportanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(ImportanceMode::Abs),
            "square" => Ok(ImportanceMode::Square),
            _ => Err(Error::Argument(format!("unknown importance mode `{s}` (abs|square)"))),
        }
    }
}

/// Which class score is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Score {
    /// Pre-softmax logit.
    #[default]
    Logit,
    /// Post-softmax probability.
    Probability,
}

impl std::str::FromStr for Score {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(Score::Logit),
            "prob" | "probability" => Ok(Score::Probability),
            _ => Err(Error::Argument(format!("unknown score `{s}` (logit|prob)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    TrueLabel,
    Predicted,
}

impl std::str::FromStr for TargetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(TargetSource::TrueLabel),
            "pred" | "predicted" => Ok(TargetSource::Predicted),
            _ => Err(Error::Argument(format!("unknown target `{s}` (true|pred)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    I,
    J,
    K,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::I => "i",
            Axis::J => "j",
            Axis::K => "k",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(Axis::I),
            "j" => Ok(Axis::J),
            "k" => Ok(Axis::K),
            _ => Err(Error::Argument(format!("unknown axis `{s}` (i|j|k)"))),
        }
    }
}

/// Row-major 2D matrix: `values[r * cols + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2 {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Matrix2 {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Max of the field along `axis`; remaining axes keep their order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub axis: Axis,
    pub values: Matrix2,
}

fn input_tensor(model: &Network, grid: &VoxelGrid) -> Result<Tensor> {
    let r = model.resolution();
    if grid.dims() != [r; 3] {
        return Err(Error::Shape(format!(
            "grid dims {:?} do not match model resolution {r}",
            grid.dims()
        )));
    }
    Tensor::from_vec(&[1, 1, r, r, r], grid.to_f64())
}

/// `dS_target / dX` through the whole network in inference mode.
pub fn input_gradient(model: &Network, grid: &VoxelGrid, target: usize, score: Score) -> Result<ScalarField> {
    let c = model.num_classes();
    if target >= c {
        return Err(Error::Argument(format!("target class {target} out of range for {c} classes")));
    }
    let x = input_tensor(model, grid)?;
    let pass = model.forward_infer(&x)?;
    let mut g = Tensor::zeros(&[1, c]);
    match score {
        Score::Logit => g.data_mut()[target] = 1.0,
        Score::Probability => {
            let p = pass.probs.data();
            for j in 0..c {
                let delta = if j == target { 1.0 } else { 0.0 };
                g.data_mut()[j] = p[target] * (delta - p[j]);
            }
        }
    }
    let back = model.backward(pass, &g, false)?;
    ScalarField::new(grid.dims(), back.input.into_data())
}

pub fn importance_map(g: &ScalarField, mode: ImportanceMode) -> ScalarField {
    let f = match mode {
        ImportanceMode::Abs => |v: f64| v.abs(),
        ImportanceMode::Square => |v: f64| v * v,
    };
    ScalarField {
        dims: g.dims,
        data: g.data.iter().map(|v| f(*v)).collect(),
    }
}

/// `(M - min) / (max - min)`; all zeros when the field is constant.
pub fn normalize(m: &ScalarField) -> ScalarField {
    let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi > lo {
        m.data.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; m.data.len()]
    };
    ScalarField { dims: m.dims, data }
}

/// Maps a 2D cell `(r, c)` plus a position `t` along `axis` to 3D coordinates.
fn coords(axis: Axis, r: usize, c: usize, t: usize) -> [usize; 3] {
    match axis {
        Axis::I => [t, r, c],
        Axis::J => [r, t, c],
        Axis::K => [r, c, t],
    }
}

fn plane_dims(dims: [usize; 3], axis: Axis) -> (usize, usize) {
    match axis {
        Axis::I => (dims[1], dims[2]),
        Axis::J => (dims[0], dims[2]),
        Axis::K => (dims[0], dims[1]),
    }
}

pub fn project(m: &ScalarField, axis: Axis) -> Projection2D {
    let (rows, cols) = plane_dims(m.dims, axis);
    let depth = m.dims[axis.index()];
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = (0..depth)
                .map(|t| {
                    let [i, j, k] = coords(axis, r, c, t);
                    m.get(i, j, k)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            values.push(v);
        }
    }
    Projection2D {
        axis,
        values: Matrix2 { rows, cols, values },
    }
}

pub fn slice(m: &ScalarField, axis: Axis, index: usize) -> Result<Matrix2> {
    let depth = m.dims[axis.index()];
    if index >= depth {
        return Err(Error::Argument(format!(
            "slice index {index} out of range for axis {} of extent {depth}",
            axis.as_str()
        )));
    }
    let (rows, cols) = plane_dims(m.dims, axis);
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let [i, j, k] = coords(axis, r, c, index);
            values.push(m.get(i, j, k));
        }
    }
    Ok(Matrix2 { rows, cols, values })
}

pub const RANK_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RankBandMap {
    pub dims: [usize; 3],
    /// 0 for unoccupied voxels, else 1 (most salient tenth) ..= 10.
    pub bands: Vec<u8>,
    /// `thresholds[b - 1]` is the smallest saliency within ranks `1..=b`, for b in 1..=9.
    pub thresholds: Vec<f64>,
}

impl RankBandMap {
    pub fn band_sizes(&self) -> [usize; RANK_COUNT] {
        let mut sizes = [0; RANK_COUNT];
        for b in &self.bands {
            if *b > 0 {
                sizes[*b as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// Splits occupied voxels into ten equal-as-possible bands by descending
/// saliency, ties by ascending linear index.
pub fn rank_bands(m: &ScalarField, occupancy: &VoxelGrid) -> Result<RankBandMap> {
    if occupancy.dims() != m.dims {
        return Err(Error::Shape(format!(
            "occupancy dims {:?} do not match saliency dims {:?}",
            occupancy.dims(),
            m.dims
        )));
    }
    let mut order: Vec<usize> = (0..m.data.len()).filter(|i| occupancy.data()[*i] != 0.0).collect();
    if order.is_empty() {
        return Err(Error::EmptyForm);
    }
    order.sort_by(|a, b| m.data[*b].total_cmp(&m.data[*a]).then(a.cmp(b)));
    let n = order.len();
    let mut bands = vec![0u8; m.data.len()];
    for (p, idx) in order.iter().enumerate() {
        bands[*idx] = (p * RANK_COUNT / n + 1) as u8;
    }
    let thresholds = (1..RANK_COUNT)
        .map(|b| m.data[order[(b * n).div_ceil(RANK_COUNT).max(1) - 1]])
        .collect();
    Ok(RankBandMap {
        dims: m.dims,
        bands,
        thresholds,
    })
}

/// Chooses the class to explain.
pub fn resolve_target(model: &Network, grid: &VoxelGrid, source: TargetSource, label: Option<Label>) -> Result<usize> {
    match source {
        TargetSource::TrueLabel => label
            .map(Label::index)
            .ok_or_else(|| Error::Argument("target `true` needs the form's label".into())),
        TargetSource::Predicted => {
            let probs = model.predict(&input_tensor(model, grid)?)?;
            Ok(argmax_rows(&probs)?[0])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyResult {
    pub gradient: ScalarField,
    pub importance: ScalarField,
    pub normalized: ScalarField,
    pub mode: ImportanceMode,
    pub target_class: usize,
    pub target_source: TargetSource,
}

pub fn compute_saliency(
    model: &Network,
    grid: &VoxelGrid,
    mode: ImportanceMode,
    source: TargetSource,
    label: Option<Label>,
    score: Score,
) -> Result<SaliencyResult> {
    let target = resolve_target(model, grid, source, label)?;
    let gradient = input_gradient(model, grid, target, score)?;
    let importance = importance_map(&gradient, mode);
    let normalized = normalize(&importance);
    Ok(SaliencyResult {
        gradient,
        importance,
        normalized,
        mode,
        target_class: target,
        target_source: source,
    })
}
