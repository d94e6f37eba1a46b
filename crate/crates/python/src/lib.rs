//! Python module `archshape`: grids, voxelization, dataset generation,
//! checkpoint inference, saliency and metrics.

use std::path::PathBuf;

use archshape::datagen::{gen_dataset as gen, SplitCounts};
use archshape::evaluation::{metrics as score_metrics, ConfusionMatrix};
use archshape::files::{load_grid, read_bytes, save_grid};
use archshape::geometry::{parse_mesh, standardize, voxelize as voxelize_mesh, MeshFormat};
use archshape::model::load_checkpoint;
use archshape::saliency::{compute_saliency, field_to_grid};
use archshape::{Error, Label, Network, Tensor, VoxelGrid};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// Dense 3D grid of occupancy or scalar values, indexed `(i, j, k)`.
#[pyclass(name = "Grid", module = "archshape")]
struct Grid {
    inner: VoxelGrid,
}

#[pymethods]
impl Grid {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Grid {
            inner: load_grid(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_grid(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let [d, h, w] = self.inner.dims();
        (d, h, w)
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f32> {
        let [d, h, w] = self.inner.dims();
        if i >= d || j >= h || k >= w {
            return Err(PyValueError::new_err(format!("({i}, {j}, {k}) outside {d}x{h}x{w}")));
        }
        Ok(self.inner.get(i, j, k))
    }

    /// Values in linear order `(i * H + j) * W + k`.
    fn values(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn occupied_count(&self) -> usize {
        self.inner.occupied_count()
    }

    fn occupancy_fraction(&self) -> f64 {
        self.inner.occupancy_fraction()
    }

    fn __repr__(&self) -> String {
        let [d, h, w] = self.inner.dims();
        format!("Grid({d}x{h}x{w}, {:?})", self.inner.kind())
    }
}

/// Standardizes and voxelizes an OBJ or STL mesh file.
#[pyfunction]
#[pyo3(signature = (path, resolution = 32, fill = "solid"))]
fn voxelize(path: PathBuf, resolution: usize, fill: &str) -> PyResult<Grid> {
    let bytes = read_bytes(&path).map_err(py_err)?;
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default();
    let format = MeshFormat::detect(&ext, &bytes).map_err(py_err)?;
    let mesh = parse_mesh(&bytes, format).map_err(py_err)?;
    let (mesh, _) = standardize(&mesh).map_err(py_err)?;
    Ok(Grid {
        inner: voxelize_mesh(&mesh, resolution, parse(fill)?).map_err(py_err)?,
    })
}

/// Writes a seeded dataset; returns manifest rows `(path, label, split)`.
#[pyfunction]
#[pyo3(signature = (out_dir, train, test, seed, resolution = 32, val = 0))]
fn gen_dataset(
    out_dir: PathBuf,
    train: usize,
    test: usize,
    seed: u64,
    resolution: usize,
    val: usize,
) -> PyResult<Vec<(String, String, String)>> {
    let m = gen(SplitCounts { train, val, test }, resolution, seed, &out_dir).map_err(py_err)?;
    Ok(m.rows
        .into_iter()
        .map(|r| (r.path, r.label.to_string(), r.split.to_string()))
        .collect())
}

/// `(accuracy, precision, recall)` from confusion counts (rows true, columns predicted).
#[pyfunction]
#[pyo3(signature = (human_human, human_machine, machine_human, machine_machine, positive = "machine"))]
fn metrics(
    human_human: u64,
    human_machine: u64,
    machine_human: u64,
    machine_machine: u64,
    positive: &str,
) -> PyResult<(f64, f64, f64)> {
    let cm = ConfusionMatrix::from_counts([[human_human, human_machine], [machine_human, machine_machine]]);
    let m = score_metrics(&cm, parse::<Label>(positive)?).map_err(py_err)?;
    Ok((m.accuracy, m.precision, m.recall))
}

/// A trained classifier loaded from an ASN1 checkpoint.
#[pyclass(name = "Model", module = "archshape")]
struct Model {
    inner: Network,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = read_bytes(&path).map_err(py_err)?;
        Ok(Model {
            inner: load_checkpoint(&bytes).map_err(py_err)?,
        })
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.inner.resolution()
    }

    /// `(p_human, p_machine)` in inference mode.
    fn predict(&self, grid: &Grid) -> PyResult<(f64, f64)> {
        let [d, h, w] = grid.inner.dims();
        let x = Tensor::from_vec(&[1, 1, d, h, w], grid.inner.to_f64()).map_err(py_err)?;
        let p = self.inner.predict(&x).map_err(py_err)?;
        Ok((p.data()[0], p.data()[1]))
    }

    /// Normalized saliency map as a scalar grid.
    #[pyo3(signature = (grid, mode = "abs", target = "pred", label = None, score = "logit"))]
    fn saliency(&self, grid: &Grid, mode: &str, target: &str, label: Option<&str>, score: &str) -> PyResult<Grid> {
        let label = label.map(parse::<Label>).transpose()?;
        let r = compute_saliency(&self.inner, &grid.inner, parse(mode)?, parse(target)?, label, parse(score)?)
            .map_err(py_err)?;
        Ok(Grid {
            inner: field_to_grid(&r.normalized).map_err(py_err)?,
        })
    }
}

#[pymodule]
#[pyo3(name = "archshape")]
fn archshape_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(voxelize, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
