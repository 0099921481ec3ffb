//! Python bindings: images, lattices, meshes, the dominance machinery, the
//! synthetic benchmark helpers and a one-call coarse-to-fine registration.

use ffdreg::coarse2fine::{plan_levels, run_coarse_to_fine, subdivide_mesh, Algorithm, BudgetScope, RunSettings};
use ffdreg::decision::RegistrationResult;
use ffdreg::ffd::{bspline_weights as weights, warp_backward, ControlMesh, LatticeConfig, PixelCoord};
use ffdreg::image::{build_pyramid, read_image, write_png, GrayImage};
use ffdreg::synthbench::{self, DeformationKind};
use ffdreg::{moea, Error};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "LatticeConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLattice(LatticeConfig);

#[pymethods]
impl PyLattice {
    #[new]
    fn new(n_x: usize, n_y: usize, image_w: usize, image_h: usize) -> PyResult<Self> {
        LatticeConfig::new(n_x, n_y, image_w, image_h).map(Self).map_err(err)
    }

    #[getter]
    fn n_x(&self) -> usize {
        self.0.n_x
    }

    #[getter]
    fn n_y(&self) -> usize {
        self.0.n_y
    }

    #[getter]
    fn spacing(&self) -> (usize, usize) {
        (self.0.s_x, self.0.s_y)
    }

    #[getter]
    fn image_size(&self) -> (usize, usize) {
        (self.0.image_w, self.0.image_h)
    }

    #[getter]
    fn n_genes(&self) -> usize {
        self.0.n_genes()
    }

    fn __repr__(&self) -> String {
        let c = self.0;
        format!(
            "LatticeConfig({}x{}, spacing {}x{}, image {}x{})",
            c.n_x, c.n_y, c.s_x, c.s_y, c.image_w, c.image_h
        )
    }
}

#[pyclass(name = "GrayImage", frozen)]
struct PyImage(GrayImage);

#[pymethods]
impl PyImage {
    /// Row-major intensities in `[0, 255]`.
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        GrayImage::new(width, height, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        read_image(path).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, seed = 0))]
    fn procedural(width: usize, height: usize, seed: u64) -> PyResult<Self> {
        synthbench::procedural_texture(width, height, seed).map(Self).map_err(err)
    }

    fn write_png(&self, path: &str) -> PyResult<()> {
        write_png(&self.0, path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        self.0.sample_bilinear(x, y)
    }

    /// Pyramid levels, coarsest first.
    fn pyramid(&self, levels: usize) -> PyResult<Vec<PyImage>> {
        let p = build_pyramid(&self.0, levels).map_err(err)?;
        Ok(p.levels().iter().cloned().map(PyImage).collect())
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(name = "ControlMesh", frozen)]
struct PyMesh(ControlMesh);

fn parse_kind(kind: &str) -> PyResult<DeformationKind> {
    match kind {
        "vertical" => Ok(DeformationKind::Vertical),
        "both" => Ok(DeformationKind::Both),
        other => Err(PyValueError::new_err(format!("unknown deformation kind {other:?}"))),
    }
}

#[pymethods]
impl PyMesh {
    /// Genes in `(dy, dx)` pairs, x index fastest.
    #[new]
    fn new(lattice: &PyLattice, genes: Vec<f64>) -> PyResult<Self> {
        ControlMesh::from_genes(lattice.0, &genes).map(Self).map_err(err)
    }

    #[staticmethod]
    fn zeros(lattice: &PyLattice) -> Self {
        Self(ControlMesh::zeros(lattice.0))
    }

    #[staticmethod]
    #[pyo3(signature = (lattice, kind, amplitude, cycles = 1.0, phase = 0.0))]
    fn wavy(lattice: &PyLattice, kind: &str, amplitude: f64, cycles: f64, phase: f64) -> PyResult<Self> {
        synthbench::generate_wavy_mesh(&lattice.0, parse_kind(kind)?, amplitude, cycles, phase)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(Self)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn lattice(&self) -> PyLattice {
        PyLattice(*self.0.config())
    }

    fn genes(&self) -> Vec<f64> {
        self.0.to_genes()
    }

    /// `(dx, dy)` at control point `(i, j)`.
    fn point(&self, i: usize, j: usize) -> PyResult<(f64, f64)> {
        let c = self.0.config();
        if i >= c.n_x || j >= c.n_y {
            return Err(PyValueError::new_err(format!("point ({i}, {j}) outside {}x{}", c.n_x, c.n_y)));
        }
        let d = self.0.get(i, j);
        Ok((d[0], d[1]))
    }

    /// Field value `(dx, dy)` at template pixel coordinates.
    fn displacement_at(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        let d = self.0.displacement_at(PixelCoord::new(x, y)).map_err(err)?;
        Ok((d[0], d[1]))
    }

    /// Catmull–Clark refinement with doubled displacements.
    fn subdivide(&self) -> PyResult<Self> {
        subdivide_mesh(&self.0).map(Self).map_err(err)
    }

    fn max_abs_component(&self) -> f64 {
        self.0.max_abs_component()
    }

    fn __repr__(&self) -> String {
        let c = self.0.config();
        format!("ControlMesh({}x{}, max |d| {:.3})", c.n_x, c.n_y, self.0.max_abs_component())
    }
}

#[pyclass(name = "RegistrationResult", frozen)]
struct PyRegistration(RegistrationResult);

#[pymethods]
impl PyRegistration {
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.0.algorithm.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn best_index(&self) -> usize {
        self.0.best_index
    }

    #[getter]
    fn best_objectives(&self) -> Vec<f64> {
        self.0.best.objectives.clone().unwrap_or_default()
    }

    #[getter]
    fn post_processed_objectives(&self) -> Vec<f64> {
        self.0.post_processed.objectives.clone().unwrap_or_default()
    }

    #[getter]
    fn pareto_front(&self) -> Vec<usize> {
        self.0.pareto_front.clone()
    }

    #[getter]
    fn provenance(&self) -> Vec<usize> {
        self.0.provenance.clone()
    }

    fn best_mesh(&self) -> PyMesh {
        PyMesh(self.0.best_mesh())
    }

    fn post_processed_mesh(&self) -> PyMesh {
        PyMesh(self.0.post_processed_mesh())
    }

    /// Objective vectors of the final population.
    fn objectives(&self) -> PyResult<Vec<Vec<f64>>> {
        self.0.final_population.objective_matrix().map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
fn bspline_weights(t: f64) -> PyResult<[f64; 4]> {
    weights(t).map_err(err)
}

#[pyfunction]
fn dominates(a: Vec<f64>, b: Vec<f64>) -> PyResult<bool> {
    moea::dominates(&a, &b).map_err(err)
}

/// Fronts as lists of member indices, best first.
#[pyfunction]
fn fast_nondominated_sort(objectives: Vec<Vec<f64>>) -> Vec<Vec<usize>> {
    moea::fast_nondominated_sort(&objectives).fronts
}

#[pyfunction]
fn crowding_distance(front: Vec<Vec<f64>>) -> Vec<f64> {
    moea::crowding_distance(&front)
}

#[pyfunction]
fn das_dennis(n_obj: usize, divisions: usize) -> PyResult<Vec<Vec<f64>>> {
    moea::das_dennis_points(n_obj, divisions).map(|r| r.points).map_err(err)
}

/// `(image, mask)` of the template backward-warped onto a `width x height` frame.
#[pyfunction]
fn warp(template: &PyImage, mesh: &PyMesh, width: usize, height: usize) -> PyResult<(PyImage, Vec<bool>)> {
    let w = warp_backward(&template.0, &mesh.0, width, height).map_err(err)?;
    Ok((PyImage(w.image), w.mask))
}

/// `(template, target)` for a base image and a mesh on the template lattice.
#[pyfunction]
fn synthesize_case(base: &PyImage, template_size: usize, mesh: &PyMesh) -> PyResult<(PyImage, PyImage)> {
    let c = synthbench::synthesize_case(&base.0, template_size, &mesh.0).map_err(err)?;
    Ok((PyImage(c.template), PyImage(c.target)))
}

#[pyfunction]
fn rmse(mesh: &PyMesh, template: &PyImage, target: &PyImage) -> PyResult<f64> {
    synthbench::rmse(&mesh.0, &template.0, &target.0).map_err(err)
}

#[pyfunction]
fn mede(estimate: &PyMesh, ground_truth: &PyMesh) -> PyResult<f64> {
    synthbench::mede(&estimate.0, &ground_truth.0).map_err(err)
}

/// Coarse-to-fine registration of `target` against `template`.
#[pyfunction]
#[pyo3(signature = (
    template, target, algorithm = "nsga2", groups = None, lattice = (7, 7), range = 5.0,
    levels = 3, budget = 10000, seed = 0, stride = 5, population = 100
))]
#[allow(clippy::too_many_arguments)]
fn register(
    py: Python<'_>,
    template: &PyImage,
    target: &PyImage,
    algorithm: &str,
    groups: Option<usize>,
    lattice: (usize, usize),
    range: f64,
    levels: usize,
    budget: usize,
    seed: u64,
    stride: usize,
    population: usize,
) -> PyResult<PyRegistration> {
    let algorithm = match algorithm {
        "ga" => Algorithm::Ga,
        "nsga2" => Algorithm::Nsga2,
        "nsga3" => Algorithm::Nsga3,
        other => return Err(PyValueError::new_err(format!("unknown algorithm {other:?}"))),
    };
    let groups = groups.unwrap_or(if algorithm == Algorithm::Ga { 1 } else { 2 });
    let settings = RunSettings {
        population_size: population,
        stride,
        ..RunSettings::default()
    };
    let (t, g) = (&template.0, &target.0);
    py.detach(|| {
        let tp = build_pyramid(t, levels)?;
        let gp = build_pyramid(g, levels)?;
        let plans = plan_levels(lattice, levels, &tp, &gp, range, budget, BudgetScope::PerLevel)?;
        run_coarse_to_fine(algorithm, &plans, groups, seed, &settings)
    })
    .map(PyRegistration)
    .map_err(err)
}

#[pymodule]
fn pyffdreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRegistration>()?;
    m.add_function(wrap_pyfunction!(bspline_weights, m)?)?;
    m.add_function(wrap_pyfunction!(dominates, m)?)?;
    m.add_function(wrap_pyfunction!(fast_nondominated_sort, m)?)?;
    m.add_function(wrap_pyfunction!(crowding_distance, m)?)?;
    m.add_function(wrap_pyfunction!(das_dennis, m)?)?;
    m.add_function(wrap_pyfunction!(warp, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_case, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mede, m)?)?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    Ok(())
}
