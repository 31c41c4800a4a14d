//! Finite-difference steady conduction solver on the computational plane.
//!
//! Because ξ and η are harmonic in the physical plane, the Laplacian maps to
//! `α T_ξξ − 2β T_ξη + γ T_ηη` (up to the positive factor `1/J²`), which has
//! the same operator as the mesh equations.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{apply_operator, coons, jacobian_min, local_solve, metric_at, MetricCoeffs, StructuredMesh};

/// How a straight side is filled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideMode {
    Constant(f64),
    /// Linear in the η index between the adjacent top and bottom corners.
    Blend,
}

/// Dirichlet data in kelvin. The top and bottom curves own the corner nodes.
///
/// The default holds both straight sides at the mean of the curve values.
/// Blending both sides linearly would make `T` linear in η, which solves the
/// discrete problem exactly on every mesh and so carries no geometry
/// information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub top_value: f64,
    pub bottom_value: f64,
    pub left_mode: SideMode,
    pub right_mode: SideMode,
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        BoundaryConditions {
            top_value: 350.0,
            bottom_value: 300.0,
            left_mode: SideMode::Constant(325.0),
            right_mode: SideMode::Constant(325.0),
        }
    }
}

impl BoundaryConditions {
    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![self.top_value, self.bottom_value];
        for m in [self.left_mode, self.right_mode] {
            if let SideMode::Constant(v) = m {
                vals.push(v);
            }
        }
        if vals.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InputDomain("boundary temperatures must be finite".into()))
        }
    }

    /// Array of shape `(n_eta, n_xi)` holding the boundary values (interior zero).
    pub fn boundary_values(&self, n_eta: usize, n_xi: usize) -> Array2<f64> {
        let mut t = Array2::zeros((n_eta, n_xi));
        let side = |mode: SideMode, i: usize| match mode {
            SideMode::Constant(v) => v,
            SideMode::Blend => {
                let s = i as f64 / (n_eta - 1) as f64;
                self.top_value + s * (self.bottom_value - self.top_value)
            }
        };
        for i in 1..n_eta - 1 {
            t[[i, 0]] = side(self.right_mode, i);
            t[[i, n_xi - 1]] = side(self.left_mode, i);
        }
        t.row_mut(0).fill(self.top_value);
        t.row_mut(n_eta - 1).fill(self.bottom_value);
        t
    }
}

/// Nodal scalar values, `[η][ξ]`, tagged with a hierarchy level.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Array2<f64>,
    pub level: usize,
}

impl ScalarField {
    pub fn new(values: Array2<f64>, level: usize) -> Self {
        ScalarField {
            values: values.as_standard_layout().into_owned(),
            level,
        }
    }

    pub fn zeros(dims: (usize, usize), level: usize) -> Self {
        ScalarField::new(Array2::zeros(dims), level)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for the mean absolute interior stencil residual.
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub check_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iter: 200_000,
            omega: 1.8,
            check_every: 10,
        }
    }
}

fn interior_coeffs(mesh: &StructuredMesh) -> Vec<MetricCoeffs> {
    let (rows, cols) = mesh.dims();
    let x = mesh.x().as_slice().expect("standard layout");
    let y = mesh.y().as_slice().expect("standard layout");
    let zero = MetricCoeffs { alpha: 0.0, beta: 0.0, gamma: 0.0 };
    let mut out = vec![zero; rows * cols];
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            let k = i * cols + j;
            out[k] = metric_at(x, y, k, cols);
        }
    }
    out
}

fn mean_residual(t: &[f64], coeffs: &[MetricCoeffs], rows: usize, cols: usize) -> f64 {
    let mut s = 0.0;
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            let k = i * cols + j;
            s += apply_operator(t, k, cols, &coeffs[k]).abs();
        }
    }
    s / ((rows - 2) * (cols - 2)) as f64
}

fn check_mesh(mesh: &StructuredMesh) -> Result<()> {
    let min_jacobian = jacobian_min(mesh)?;
    if !(min_jacobian > 0.0) {
        return Err(Error::MeshFolding { min_jacobian });
    }
    Ok(())
}

/// Solve with Dirichlet values taken from the outer rows/columns of
/// `boundary`; interior entries of `boundary` are ignored.
pub fn solve_dirichlet(mesh: &StructuredMesh, boundary: &Array2<f64>, opts: &SolveOptions) -> Result<ScalarField> {
    check_mesh(mesh)?;
    let (rows, cols) = mesh.dims();
    if boundary.dim() != (rows, cols) {
        return Err(Error::Data(format!(
            "boundary data shape {:?} does not match mesh {:?}",
            boundary.dim(),
            (rows, cols)
        )));
    }
    if !(opts.tol > 0.0) || !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::InputDomain("solver needs tol > 0 and 0 < omega < 2".into()));
    }
    let edge = |v: ndarray::ArrayView1<f64>| v.to_vec();
    let top = edge(boundary.row(0));
    let bottom = edge(boundary.row(rows - 1));
    let right = edge(boundary.column(0));
    let left = edge(boundary.column(cols - 1));
    if top.iter().chain(&bottom).chain(&right).chain(&left).any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("boundary temperatures must be finite".into()));
    }
    let mut field = coons(&top, &bottom, &right, &left);
    let coeffs = interior_coeffs(mesh);
    let t = field.as_slice_mut().expect("standard layout");
    let mut res = mean_residual(t, &coeffs, rows, cols);
    let mut sweeps = 0;
    let check_every = opts.check_every.max(1);
    while res > opts.tol {
        if sweeps >= opts.max_iter {
            return Err(Error::Convergence { what: "temperature solve", iterations: sweeps, last: res });
        }
        let n = check_every.min(opts.max_iter - sweeps);
        for _ in 0..n {
            for i in 1..rows - 1 {
                for j in 1..cols - 1 {
                    let k = i * cols + j;
                    if let Some(v) = local_solve(t, k, cols, &coeffs[k]) {
                        t[k] += opts.omega * (v - t[k]);
                    }
                }
            }
        }
        sweeps += n;
        res = mean_residual(t, &coeffs, rows, cols);
        if !res.is_finite() {
            return Err(Error::Convergence { what: "temperature solve", iterations: sweeps, last: res });
        }
    }
    log::trace!("temperature solve: {sweeps} sweeps, residual {res:e}");
    Ok(ScalarField::new(field, 0))
}

/// Steady temperature on `mesh` under `bc`.
pub fn solve_laplace(mesh: &StructuredMesh, bc: &BoundaryConditions, opts: &SolveOptions) -> Result<ScalarField> {
    bc.validate()?;
    let (rows, cols) = mesh.dims();
    if rows < 3 || cols < 3 {
        return Err(Error::InputDomain(format!("mesh has no interior nodes ({rows}x{cols})")));
    }
    solve_dirichlet(mesh, &bc.boundary_values(rows, cols), opts)
}

/// Mean absolute value of the transformed operator over interior nodes.
pub fn field_residual(mesh: &StructuredMesh, field: &ScalarField) -> Result<f64> {
    let (rows, cols) = mesh.dims();
    if field.dims() != (rows, cols) {
        return Err(Error::Data(format!(
            "field shape {:?} does not match mesh {:?}",
            field.dims(),
            (rows, cols)
        )));
    }
    if rows < 3 || cols < 3 {
        return Err(Error::InputDomain(format!("mesh has no interior nodes ({rows}x{cols})")));
    }
    let coeffs = interior_coeffs(mesh);
    Ok(mean_residual(
        field.values.as_slice().expect("standard layout"),
        &coeffs,
        rows,
        cols,
    ))
}
