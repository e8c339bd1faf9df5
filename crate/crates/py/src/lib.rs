//! Python bindings for the desingularization workbench: the critical
//! constants, the catenoid family, initial-surface builds with their
//! diagnostics, the global linear solve and the fixed-point run.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fbms_core::driver::{self, RunConfig};
use fbms_core::geom;
use fbms_core::linsolve;
use fbms_core::mesher::{self};
use fbms_core::rotsym;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn critical_constants(py: Python<'_>) -> PyResult<Py<PyDict>> {
    let c = rotsym::solve_critical_constants().map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("R_crit", c.r_crit_boundary)?;
    d.set_item("z_crit", c.z_crit)?;
    d.set_item("r_crit", c.r_crit)?;
    d.set_item("x_crit", c.x_crit)?;
    d.set_item("theta_min", c.theta_min)?;
    d.set_item("area_K", c.area_k)?;
    Ok(d.into())
}

#[pyfunction]
fn catenoid_family(py: Python<'_>, theta: f64) -> PyResult<Py<PyDict>> {
    let c = rotsym::solve_critical_constants().map_err(err)?;
    let fam = rotsym::family_at_theta(theta, &c).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("h", fam.h)?;
    d.set_item("theta", fam.theta)?;
    d.set_item("tilde_r", fam.tilde_r)?;
    d.set_item("tilde_z", fam.tilde_z)?;
    d.set_item("r_theta", fam.r_hat)?;
    d.set_item("z_theta", fam.z_theta)?;
    Ok(d.into())
}

#[pyfunction]
#[pyo3(signature = (m, theta=0.0, res=6.0))]
fn build_initial_surface(
    py: Python<'_>,
    m: usize,
    theta: f64,
    res: f64,
) -> PyResult<(Vec<(f64, f64, f64)>, Vec<(u32, u32, u32)>, Py<PyDict>)> {
    let params = mesher::BuildParams::auto(theta, m, res);
    let mesh = mesher::build_initial_surface(&params).map_err(err)?;
    let verts: Vec<(f64, f64, f64)> = mesh.pos.iter().map(|p| (p.x, p.y, p.z)).collect();
    let tris: Vec<(u32, u32, u32)> = mesh.tris.iter().map(|t| (t[0], t[1], t[2])).collect();
    let d = PyDict::new(py);
    d.set_item("euler_characteristic", mesh.euler_characteristic())?;
    d.set_item("boundary_loops", mesh.boundary_loops.len())?;
    d.set_item("area", mesh.area())?;
    d.set_item("symmetry_deviation", mesh.symmetry_deviation())?;
    d.set_item("lambda", mesh.deform.lambda)?;
    Ok((verts, tris, d.into()))
}

#[pyfunction]
#[pyo3(signature = (m, theta=0.0, res=6.0))]
fn mean_curvature(m: usize, theta: f64, res: f64) -> PyResult<Vec<f64>> {
    let params = mesher::BuildParams::auto(theta, m, res);
    let mesh = mesher::build_initial_surface(&params).map_err(err)?;
    Ok(geom::mean_curvature_initial(&mesh).vals)
}

#[pyfunction]
#[pyo3(signature = (m, res=6.0))]
fn kernel_report(py: Python<'_>, m: usize, res: f64) -> PyResult<Py<PyDict>> {
    let params = mesher::BuildParams::auto(0.0, m, res);
    let mesh = mesher::build_initial_surface(&params).map_err(err)?;
    let sp = linsolve::scherk_kernel_check(&mesh).map_err(err)?;
    let sk = linsolve::substitute_kernel_w(&mesh).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("sigma1", sp.sigma1)?;
    d.set_item("sigma2", sp.sigma2)?;
    d.set_item("correlation", sp.correlation)?;
    d.set_item("pairing", sk.pairing)?;
    d.set_item("flux_oracle", sk.flux_oracle)?;
    Ok(d.into())
}

#[pyfunction]
#[pyo3(signature = (m, res=6.0, max_iterations=20))]
fn run_fixed_point(py: Python<'_>, m: usize, res: f64, max_iterations: usize) -> PyResult<Py<PyDict>> {
    let cfg = RunConfig { m, res, max_iterations, ..Default::default() };
    let (_mesh, _pos, report) = driver::run(&cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("converged", report.converged)?;
    d.set_item("iterations", report.records.len())?;
    d.set_item("theta_star", report.theta_star)?;
    d.set_item("initial_max_h", report.initial_max_h)?;
    d.set_item("final_max_h", report.final_max_h)?;
    d.set_item("final_max_theta", report.final_max_theta)?;
    d.set_item("final_area", report.final_area)?;
    d.set_item("genus", report.genus)?;
    d.set_item("seconds", report.seconds)?;
    Ok(d.into())
}

#[pymodule]
fn fbms_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(critical_constants, m)?)?;
    m.add_function(wrap_pyfunction!(catenoid_family, m)?)?;
    m.add_function(wrap_pyfunction!(build_initial_surface, m)?)?;
    m.add_function(wrap_pyfunction!(mean_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_fixed_point, m)?)?;
    Ok(())
}
