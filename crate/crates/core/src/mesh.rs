//! Structured body-fitted meshes and the elliptic (Winslow-type) generator.
//!
//! Arrays are indexed `[i][j]` with `i` the η index (rows) and `j` the ξ index
//! (columns). All differences use unit index spacing, so residuals and metric
//! coefficients are index-space quantities.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{DomainBoundary, Point2};

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredMesh {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl StructuredMesh {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::Construction(format!(
                "coordinate arrays differ in shape: {:?} vs {:?}",
                x.dim(),
                y.dim()
            )));
        }
        let (r, c) = x.dim();
        if r < 2 || c < 2 {
            return Err(Error::Construction(format!("mesh too small: {r}x{c}")));
        }
        // standard layout keeps the flat-slice kernels valid
        Ok(StructuredMesh {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
        })
    }

    /// Build a mesh by evaluating `f(i, j)` at every node.
    pub fn from_fn(n_eta: usize, n_xi: usize, mut f: impl FnMut(usize, usize) -> Point2) -> Result<Self> {
        let mut x = Array2::zeros((n_eta, n_xi));
        let mut y = Array2::zeros((n_eta, n_xi));
        for i in 0..n_eta {
            for j in 0..n_xi {
                let p = f(i, j);
                x[[i, j]] = p.x;
                y[[i, j]] = p.y;
            }
        }
        StructuredMesh::new(x, y)
    }

    pub fn n_eta(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_xi(&self) -> usize {
        self.x.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.x.dim()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn node(&self, i: usize, j: usize) -> Point2 {
        Point2::new(self.x[[i, j]], self.y[[i, j]])
    }

    /// True when the outer rows and columns coincide bit-for-bit with `b`.
    pub fn matches_boundary(&self, b: &DomainBoundary) -> bool {
        let (r, c) = self.dims();
        if b.n_eta() != r || b.n_xi() != c {
            return false;
        }
        let same = |p: Point2, q: Point2| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits();
        (0..c).all(|j| same(self.node(0, j), b.top[j]) && same(self.node(r - 1, j), b.bottom[j]))
            && (0..r).all(|i| same(self.node(i, 0), b.right[i]) && same(self.node(i, c - 1), b.left[i]))
    }

    fn ensure_interior(&self) -> Result<()> {
        let (r, c) = self.dims();
        if r < 3 || c < 3 {
            return Err(Error::InputDomain(format!(
                "mesh has no interior nodes ({r}x{c})"
            )));
        }
        Ok(())
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Data("mesh contains non-finite coordinates".into()))
        }
    }

    fn slices(&self) -> (&[f64], &[f64]) {
        (
            self.x.as_slice().expect("standard layout"),
            self.y.as_slice().expect("standard layout"),
        )
    }
}

/// Winslow metric coefficients at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[inline]
pub(crate) fn metric_at(x: &[f64], y: &[f64], k: usize, cols: usize) -> MetricCoeffs {
    let x_xi = 0.5 * (x[k + 1] - x[k - 1]);
    let y_xi = 0.5 * (y[k + 1] - y[k - 1]);
    let x_eta = 0.5 * (x[k + cols] - x[k - cols]);
    let y_eta = 0.5 * (y[k + cols] - y[k - cols]);
    MetricCoeffs {
        alpha: x_eta * x_eta + y_eta * y_eta,
        beta: x_xi * x_eta + y_xi * y_eta,
        gamma: x_xi * x_xi + y_xi * y_xi,
    }
}

#[inline]
pub(crate) fn jacobian_at(x: &[f64], y: &[f64], k: usize, cols: usize) -> f64 {
    let x_xi = 0.5 * (x[k + 1] - x[k - 1]);
    let y_xi = 0.5 * (y[k + 1] - y[k - 1]);
    let x_eta = 0.5 * (x[k + cols] - x[k - cols]);
    let y_eta = 0.5 * (y[k + cols] - y[k - cols]);
    x_xi * y_eta - x_eta * y_xi
}

/// `α u_ξξ − 2β u_ξη + γ u_ηη` at flat index `k` with unit spacing.
#[inline]
pub(crate) fn apply_operator(u: &[f64], k: usize, cols: usize, m: &MetricCoeffs) -> f64 {
    let u_xixi = u[k + 1] + u[k - 1] - 2.0 * u[k];
    let u_etaeta = u[k + cols] + u[k - cols] - 2.0 * u[k];
    let u_xieta = 0.25 * (u[k + cols + 1] + u[k - cols - 1] - u[k + cols - 1] - u[k - cols + 1]);
    m.alpha * u_xixi - 2.0 * m.beta * u_xieta + m.gamma * u_etaeta
}

/// Value of `u[k]` that zeroes the local stencil, neighbours held fixed.
/// `None` when the diagonal vanishes (collapsed node).
#[inline]
pub(crate) fn local_solve(u: &[f64], k: usize, cols: usize, m: &MetricCoeffs) -> Option<f64> {
    let diag = 2.0 * (m.alpha + m.gamma);
    if diag <= f64::MIN_POSITIVE {
        return None;
    }
    let cross = 0.25 * (u[k + cols + 1] + u[k - cols - 1] - u[k + cols - 1] - u[k - cols + 1]);
    Some((m.alpha * (u[k + 1] + u[k - 1]) + m.gamma * (u[k + cols] + u[k - cols]) - 2.0 * m.beta * cross) / diag)
}

pub fn metric_coeffs(mesh: &StructuredMesh, i: usize, j: usize) -> Result<MetricCoeffs> {
    let (rows, cols) = mesh.dims();
    if i == 0 || j == 0 || i + 1 >= rows || j + 1 >= cols {
        return Err(Error::Index { i, j, rows, cols });
    }
    let (x, y) = mesh.slices();
    Ok(metric_at(x, y, i * cols + j, cols))
}

/// Residuals of the interchanged elliptic system over interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshResidualReport {
    /// Shape `(n_eta - 2, n_xi - 2)`.
    pub res_x: Array2<f64>,
    pub res_y: Array2<f64>,
    /// `mean|res_x| + mean|res_y|`.
    pub loss: f64,
}

pub fn mesh_residual(mesh: &StructuredMesh) -> Result<MeshResidualReport> {
    mesh.ensure_interior()?;
    mesh.ensure_finite()?;
    let (rows, cols) = mesh.dims();
    let (x, y) = mesh.slices();
    let mut res_x = Array2::zeros((rows - 2, cols - 2));
    let mut res_y = Array2::zeros((rows - 2, cols - 2));
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            let k = i * cols + j;
            let m = metric_at(x, y, k, cols);
            res_x[[i - 1, j - 1]] = apply_operator(x, k, cols, &m);
            res_y[[i - 1, j - 1]] = apply_operator(y, k, cols, &m);
        }
    }
    let n = res_x.len() as f64;
    let loss = res_x.iter().map(|v| v.abs()).sum::<f64>() / n + res_y.iter().map(|v| v.abs()).sum::<f64>() / n;
    Ok(MeshResidualReport { res_x, res_y, loss })
}

fn residual_loss(x: &[f64], y: &[f64], rows: usize, cols: usize) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            let k = i * cols + j;
            let m = metric_at(x, y, k, cols);
            sx += apply_operator(x, k, cols, &m).abs();
            sy += apply_operator(y, k, cols, &m).abs();
        }
    }
    let n = ((rows - 2) * (cols - 2)) as f64;
    sx / n + sy / n
}

/// Transfinite (Coons) interpolation of a scalar from its four sides, in
/// normalized index coordinates. `top`/`bottom` have `cols` entries and
/// `right`/`left` have `rows` entries; boundary rows/columns are copied verbatim.
pub(crate) fn coons(top: &[f64], bottom: &[f64], right: &[f64], left: &[f64]) -> Array2<f64> {
    let (rows, cols) = (right.len(), top.len());
    let mut out = Array2::zeros((rows, cols));
    let (t0, t1, b0, b1) = (top[0], top[cols - 1], bottom[0], bottom[cols - 1]);
    for i in 0..rows {
        let v = i as f64 / (rows - 1) as f64;
        for j in 0..cols {
            let u = j as f64 / (cols - 1) as f64;
            out[[i, j]] = (1.0 - v) * top[j] + v * bottom[j] + (1.0 - u) * right[i] + u * left[i]
                - ((1.0 - u) * (1.0 - v) * t0 + u * (1.0 - v) * t1 + (1.0 - u) * v * b0 + u * v * b1);
        }
    }
    for j in 0..cols {
        out[[0, j]] = top[j];
        out[[rows - 1, j]] = bottom[j];
    }
    for i in 0..rows {
        out[[i, 0]] = right[i];
        out[[i, cols - 1]] = left[i];
    }
    out
}

/// Algebraic initial mesh from the four boundary polylines.
pub fn init_mesh_tfi(boundary: &DomainBoundary) -> Result<StructuredMesh> {
    if boundary.top.len() != boundary.bottom.len() || boundary.left.len() != boundary.right.len() {
        return Err(Error::Construction("opposite sides have different node counts".into()));
    }
    let xs = |v: &[Point2]| v.iter().map(|p| p.x).collect::<Vec<_>>();
    let ys = |v: &[Point2]| v.iter().map(|p| p.y).collect::<Vec<_>>();
    let x = coons(&xs(&boundary.top), &xs(&boundary.bottom), &xs(&boundary.right), &xs(&boundary.left));
    let y = coons(&ys(&boundary.top), &ys(&boundary.bottom), &ys(&boundary.right), &ys(&boundary.left));
    StructuredMesh::new(x, y)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RelaxOptions {
    /// Target for the mean-absolute residual loss.
    pub tol: f64,
    pub max_iter: usize,
    /// SOR factor in (0, 2).
    pub omega: f64,
    /// Sweeps between convergence checks.
    pub check_every: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            tol: 1e-8,
            max_iter: 50_000,
            omega: 1.5,
            check_every: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxedMesh {
    pub mesh: StructuredMesh,
    pub sweeps: usize,
    pub initial_loss: f64,
    pub loss: f64,
    pub min_jacobian: f64,
}

struct Sweeper {
    rows: usize,
    cols: usize,
    coeffs: Vec<MetricCoeffs>,
}

impl Sweeper {
    fn new(rows: usize, cols: usize) -> Self {
        let zero = MetricCoeffs { alpha: 0.0, beta: 0.0, gamma: 0.0 };
        Sweeper { rows, cols, coeffs: vec![zero; rows * cols] }
    }

    /// One lagged-coefficient SOR sweep, row-major over interior nodes.
    fn sweep(&mut self, x: &mut [f64], y: &mut [f64], omega: f64) {
        let (rows, cols) = (self.rows, self.cols);
        for i in 1..rows - 1 {
            for j in 1..cols - 1 {
                let k = i * cols + j;
                self.coeffs[k] = metric_at(x, y, k, cols);
            }
        }
        for i in 1..rows - 1 {
            for j in 1..cols - 1 {
                let k = i * cols + j;
                let m = &self.coeffs[k];
                if let Some(xs) = local_solve(x, k, cols, m) {
                    x[k] += omega * (xs - x[k]);
                }
                if let Some(ys) = local_solve(y, k, cols, m) {
                    y[k] += omega * (ys - y[k]);
                }
            }
        }
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 2.0 {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("relaxation factor {omega} outside (0, 2)")))
    }
}

/// Run exactly `sweeps` relaxation sweeps with no convergence test.
pub fn relax_sweeps(mesh: &StructuredMesh, sweeps: usize, omega: f64) -> Result<StructuredMesh> {
    mesh.ensure_interior()?;
    check_omega(omega)?;
    let mut out = mesh.clone();
    let (rows, cols) = out.dims();
    let mut sweeper = Sweeper::new(rows, cols);
    {
        let x = out.x.as_slice_mut().expect("standard layout");
        let y = out.y.as_slice_mut().expect("standard layout");
        for _ in 0..sweeps {
            sweeper.sweep(x, y, omega);
        }
    }
    Ok(out)
}

/// Relax interior nodes towards the solution of the interchanged elliptic
/// system until the residual loss drops to `opts.tol`.
///
/// Boundary nodes are never written. A mesh already within tolerance is
/// returned unchanged.
pub fn relax_mesh(mesh: &StructuredMesh, opts: &RelaxOptions) -> Result<RelaxedMesh> {
    mesh.ensure_interior()?;
    mesh.ensure_finite()?;
    check_omega(opts.omega)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InputDomain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let (rows, cols) = mesh.dims();
    let mut out = mesh.clone();
    let initial_loss = {
        let (x, y) = out.slices();
        residual_loss(x, y, rows, cols)
    };
    let mut loss = initial_loss;
    let mut sweeps = 0;
    let check_every = opts.check_every.max(1);
    {
        let x = out.x.as_slice_mut().expect("standard layout");
        let y = out.y.as_slice_mut().expect("standard layout");
        let mut sweeper = Sweeper::new(rows, cols);
        while loss > opts.tol {
            if sweeps >= opts.max_iter {
                return Err(Error::Convergence { what: "mesh relaxation", iterations: sweeps, last: loss });
            }
            let n = check_every.min(opts.max_iter - sweeps);
            for _ in 0..n {
                sweeper.sweep(x, y, opts.omega);
            }
            sweeps += n;
            loss = residual_loss(x, y, rows, cols);
            if !loss.is_finite() {
                return Err(Error::Convergence { what: "mesh relaxation", iterations: sweeps, last: loss });
            }
        }
    }
    let min_jacobian = jacobian_min(&out)?;
    if !(min_jacobian > 0.0) {
        return Err(Error::MeshFolding { min_jacobian });
    }
    Ok(RelaxedMesh { mesh: out, sweeps, initial_loss, loss, min_jacobian })
}

/// Smallest central-difference Jacobian over interior nodes.
pub fn jacobian_min(mesh: &StructuredMesh) -> Result<f64> {
    mesh.ensure_interior()?;
    mesh.ensure_finite()?;
    let (rows, cols) = mesh.dims();
    let (x, y) = mesh.slices();
    let mut min = f64::INFINITY;
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            min = min.min(jacobian_at(x, y, i * cols + j, cols));
        }
    }
    Ok(min)
}

/// Build, initialize and relax the mesh for a boundary in one call.
pub fn generate_mesh(boundary: &DomainBoundary, opts: &RelaxOptions) -> Result<RelaxedMesh> {
    relax_mesh(&init_mesh_tfi(boundary)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_boundary, GeometryParams};
    use proptest::prelude::*;

    fn identity(n_eta: usize, n_xi: usize) -> StructuredMesh {
        StructuredMesh::from_fn(n_eta, n_xi, |i, j| Point2::new(j as f64, i as f64)).unwrap()
    }

    #[test]
    fn metric_examples() {
        let m = metric_coeffs(&identity(4, 5), 1, 2).unwrap();
        assert_eq!(m, MetricCoeffs { alpha: 1.0, beta: 0.0, gamma: 1.0 });

        let stretched = StructuredMesh::from_fn(4, 5, |i, j| Point2::new(2.0 * j as f64, i as f64)).unwrap();
        let m = metric_coeffs(&stretched, 2, 2).unwrap();
        assert_eq!(m, MetricCoeffs { alpha: 1.0, beta: 0.0, gamma: 4.0 });

        let (c, s) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let rotated = StructuredMesh::from_fn(4, 5, |i, j| {
            let (u, v) = (j as f64, i as f64);
            Point2::new(c * u - s * v, s * u + c * v)
        })
        .unwrap();
        let m = metric_coeffs(&rotated, 1, 1).unwrap();
        assert!((m.alpha - 1.0).abs() < 1e-14);
        assert!(m.beta.abs() < 1e-14);
        assert!((m.gamma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn metric_rejects_boundary_index() {
        let mesh = identity(4, 5);
        for (i, j) in [(0, 2), (3, 2), (1, 0), (1, 4)] {
            assert!(matches!(metric_coeffs(&mesh, i, j), Err(Error::Index { .. })));
        }
    }

    #[test]
    fn residual_of_affine_meshes_vanishes() {
        assert_eq!(mesh_residual(&identity(5, 7)).unwrap().loss, 0.0);
        let affine = StructuredMesh::from_fn(6, 9, |i, j| {
            let (u, v) = (j as f64, i as f64);
            Point2::new(3.0 + 2.0 * u - 0.5 * v, -1.0 + 0.25 * u + 1.5 * v)
        })
        .unwrap();
        assert!(mesh_residual(&affine).unwrap().loss < 1e-13);
    }

    #[test]
    fn residual_single_stencil() {
        let mut x = identity(3, 3).x().clone();
        let y = identity(3, 3).y().clone();
        x[[1, 1]] = 1.1;
        let mesh = StructuredMesh::new(x, y).unwrap();
        let r = mesh_residual(&mesh).unwrap();
        // Hand evaluation at the centre: x_ξ = (2-0)/2 = 1, y_ξ = 0, x_η = (1-1)/2 = 0,
        // y_η = 1, so α = 1, β = 0, γ = 1. x_ξξ = 2 + 0 - 2.2 = -0.2,
        // x_ηη = 1 + 1 - 2.2 = -0.2, giving res_x = -0.4 and res_y = 0.
        assert!((r.res_x[[0, 0]] + 0.4).abs() < 1e-14);
        assert_eq!(r.res_y[[0, 0]], 0.0);
        assert!((r.loss - 0.4).abs() < 1e-14);
    }

    #[test]
    fn residual_rejects_nonfinite() {
        let mut x = identity(3, 3).x().clone();
        x[[0, 0]] = f64::NAN;
        let mesh = StructuredMesh::new(x, identity(3, 3).y().clone()).unwrap();
        assert!(matches!(mesh_residual(&mesh), Err(Error::Data(_))));
        assert!(matches!(jacobian_min(&mesh), Err(Error::Data(_))));
    }

    #[test]
    fn tfi_reproduces_rectangle() {
        let b = DomainBoundary::rectangle(6.0, 3.0, 7, 4).unwrap();
        let mesh = init_mesh_tfi(&b).unwrap();
        assert!(mesh.matches_boundary(&b));
        for i in 0..4 {
            for j in 0..7 {
                let p = mesh.node(i, j);
                assert!((p.x - (6.0 - j as f64)).abs() < 1e-12);
                assert!((p.y - (3.0 - i as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tfi_on_parametric_boundary_is_finite() {
        let p = GeometryParams::new(120.0, 12.0, 15.0, 35.0, 50.0);
        let b = build_boundary(&p, 33, 9, true).unwrap();
        let mesh = init_mesh_tfi(&b).unwrap();
        assert!(mesh.matches_boundary(&b));
        assert!(mesh.x().iter().chain(mesh.y().iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(jacobian_min(&identity(4, 4)).unwrap(), 1.0);
        let mirrored = StructuredMesh::from_fn(4, 4, |i, j| Point2::new(-(j as f64), i as f64)).unwrap();
        assert_eq!(jacobian_min(&mirrored).unwrap(), -1.0);
    }

    #[test]
    fn relax_fixed_point_on_rectangle() {
        let b = DomainBoundary::rectangle(10.0, 5.0, 11, 6).unwrap();
        let mesh = init_mesh_tfi(&b).unwrap();
        let out = relax_mesh(&mesh, &RelaxOptions::default()).unwrap();
        assert_eq!(out.sweeps, 0);
        assert_eq!(out.mesh, mesh);
        let many = relax_sweeps(&mesh, 50, 1.5).unwrap();
        for (a, b) in many.x().iter().zip(mesh.x()) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn relax_converges_on_parametric_domain() {
        let p = GeometryParams::new(125.0, 13.0, 15.0, 35.0, 50.0);
        let b = build_boundary(&p, 64, 16, true).unwrap();
        let init = init_mesh_tfi(&b).unwrap();
        let out = relax_mesh(&init, &RelaxOptions::default()).unwrap();
        assert!(out.loss <= 1e-8);
        assert!(out.loss <= out.initial_loss);
        assert!(mesh_residual(&out.mesh).unwrap().loss <= 1e-8);
        assert!(out.mesh.matches_boundary(&b));
        assert!(jacobian_min(&out.mesh).unwrap() > 0.0);
    }

    #[test]
    fn relax_reports_nonconvergence() {
        let p = GeometryParams::new(125.0, 13.0, 15.0, 35.0, 50.0);
        let b = build_boundary(&p, 32, 8, true).unwrap();
        let opts = RelaxOptions { max_iter: 3, check_every: 1, ..RelaxOptions::default() };
        match relax_mesh(&init_mesh_tfi(&b).unwrap(), &opts) {
            Err(Error::Convergence { iterations, last, .. }) => {
                assert_eq!(iterations, 3);
                assert!(last > 1e-8);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn relax_rejects_folded_result() {
        // Sides traversed in the opposite orientation: the relaxed mesh is
        // smooth but its Jacobian is negative everywhere.
        let b = DomainBoundary::rectangle(4.0, 4.0, 5, 5).unwrap();
        let mut mesh = init_mesh_tfi(&b).unwrap();
        mesh.x.mapv_inplace(|v| -v);
        mesh.x[[2, 2]] += 0.3;
        assert!(matches!(
            relax_mesh(&mesh, &RelaxOptions::default()),
            Err(Error::MeshFolding { .. })
        ));
    }

    #[test]
    fn relax_rejects_bad_options() {
        let mesh = identity(4, 4);
        let bad = RelaxOptions { omega: 2.0, ..RelaxOptions::default() };
        assert!(relax_mesh(&mesh, &bad).is_err());
        let bad = RelaxOptions { tol: 0.0, ..RelaxOptions::default() };
        assert!(relax_mesh(&mesh, &bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cauchy_schwarz_on_random_meshes(vals in prop::collection::vec(-10.0f64..10.0, 2 * 5 * 6)) {
            let x = Array2::from_shape_vec((5, 6), vals[..30].to_vec()).unwrap();
            let y = Array2::from_shape_vec((5, 6), vals[30..].to_vec()).unwrap();
            let mesh = StructuredMesh::new(x, y).unwrap();
            for i in 1..4 {
                for j in 1..5 {
                    let m = metric_coeffs(&mesh, i, j).unwrap();
                    prop_assert!(m.alpha >= 0.0 && m.gamma >= 0.0);
                    prop_assert!(m.alpha * m.gamma - m.beta * m.beta >= -1e-12 * (1.0 + m.alpha * m.gamma));
                }
            }
        }

        #[test]
        fn sweeps_keep_boundary_and_are_deterministic(seed_shift in -5.0f64..5.0, sweeps in 1usize..20) {
            let p = GeometryParams::new(110.0 + seed_shift, 12.0, 10.0, 30.0, 40.0);
            let b = build_boundary(&p, 20, 6, false).unwrap();
            let init = init_mesh_tfi(&b).unwrap();
            let a = relax_sweeps(&init, sweeps, 1.5).unwrap();
            let c = relax_sweeps(&init, sweeps, 1.5).unwrap();
            prop_assert!(a.matches_boundary(&b));
            prop_assert_eq!(a, c);
        }
    }
}
