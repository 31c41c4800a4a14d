//! Proper orthogonal decomposition of per-level snapshot sets.
//!
//! Snapshots are used as-is (no mean subtraction): each level field is
//! expanded directly in its basis. The left singular vectors come from a
//! Householder QR of the snapshot matrix followed by an SVD of the small
//! triangular factor, which keeps modes with singular values down to round-off
//! (a Gram-matrix eigensolve would lose everything below ~1e-8 σ_max).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::thermal::ScalarField;

/// Row-major flatten of `[η][ξ]`.
pub fn flatten(field: &ScalarField) -> DVector<f64> {
    DVector::from_iterator(field.values.len(), field.values.iter().copied())
}

fn unflatten(v: &DVector<f64>, shape: (usize, usize), level: usize) -> ScalarField {
    let values = Array2::from_shape_vec(shape, v.iter().copied().collect()).expect("length matches shape");
    ScalarField::new(values, level)
}

/// Snapshots stored as columns.
#[derive(Clone, Debug)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    shape: (usize, usize),
    level: usize,
}

impl SnapshotMatrix {
    pub fn from_fields<'a>(fields: impl IntoIterator<Item = &'a ScalarField>, level: usize) -> Result<Self> {
        let fields: Vec<&ScalarField> = fields.into_iter().collect();
        let first = fields
            .first()
            .ok_or_else(|| Error::Data("snapshot set is empty".into()))?;
        let shape = first.dims();
        if let Some(bad) = fields.iter().find(|f| f.dims() != shape) {
            return Err(Error::Data(format!(
                "snapshot shape {:?} differs from {:?}",
                bad.dims(),
                shape
            )));
        }
        let n = shape.0 * shape.1;
        let mut data = DMatrix::zeros(n, fields.len());
        for (k, f) in fields.iter().enumerate() {
            for (r, v) in f.values.iter().enumerate() {
                data[(r, k)] = *v;
            }
        }
        Ok(SnapshotMatrix { data, shape, level })
    }

    pub fn from_matrix(data: DMatrix<f64>, shape: (usize, usize), level: usize) -> Result<Self> {
        if data.nrows() != shape.0 * shape.1 || data.ncols() == 0 {
            return Err(Error::Data(format!(
                "{}x{} snapshot matrix does not hold fields of shape {:?}",
                data.nrows(),
                data.ncols(),
                shape
            )));
        }
        Ok(SnapshotMatrix { data, shape, level })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    pub fn snapshot(&self, k: usize) -> ScalarField {
        unflatten(&self.data.column(k).into_owned(), self.shape, self.level)
    }
}

#[derive(Clone, Debug)]
pub struct PodBasis {
    /// Orthonormal modes as columns, `n × dim`.
    modes: DMatrix<f64>,
    /// All singular values of the snapshot matrix, descending.
    singular_values: Vec<f64>,
    energy: f64,
    threshold: f64,
    level: usize,
    shape: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BasisHeader {
    level: usize,
    rows: usize,
    cols: usize,
    dim: usize,
    threshold: f64,
    energy: f64,
    singular_values: Vec<f64>,
}

/// Left singular vectors and singular values (descending) of `s`.
fn thin_svd(s: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = s.shape();
    let (u, sigma) = if n >= m {
        let qr = s.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let svd = r.svd(true, false);
        (q * svd.u.expect("requested U"), svd.singular_values)
    } else {
        // S = Rᵀ Qᵀ with Sᵀ = Q R, so the left vectors of S are those of Rᵀ.
        let qr = s.transpose().qr();
        let svd = qr.r().transpose().svd(true, false);
        (svd.u.expect("requested U"), svd.singular_values)
    };
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    (u, order.iter().map(|&k| sigma[k].max(0.0)).collect())
}

/// Retain the smallest number of modes whose cumulative σ² reaches
/// `energy_threshold` of the total.
pub fn fit_pod(snapshots: &SnapshotMatrix, energy_threshold: f64) -> Result<PodBasis> {
    if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
        return Err(Error::InputDomain(format!(
            "energy threshold {energy_threshold} outside (0, 1]"
        )));
    }
    let s = snapshots.matrix();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("snapshots contain non-finite values".into()));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all snapshots are zero".into()));
    }
    let (u, sigma) = thin_svd(s);
    let total: f64 = sigma.iter().map(|v| v * v).sum();
    let cutoff = sigma[0] * (s.nrows().max(s.ncols()) as f64) * f64::EPSILON;
    let rank = sigma.iter().take_while(|&&v| v > cutoff).count().max(1);
    // Tail energies summed smallest first: a running prefix sum reaches the
    // total through rounding long before the small modes are included.
    let mut tail = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tail[k] = tail[k + 1] + sigma[k] * sigma[k];
    }
    let allowed = (1.0 - energy_threshold) * total;
    let dim = (1..=rank).find(|&k| tail[k] <= allowed).unwrap_or(rank);
    let energy = 1.0 - tail[dim] / total;
    let mut modes = u.columns(0, dim).into_owned();
    for mut col in modes.column_iter_mut() {
        let (mut best, mut mag) = (0, -1.0);
        for (i, v) in col.iter().enumerate() {
            if v.abs() > mag {
                best = i;
                mag = v.abs();
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(PodBasis {
        modes,
        singular_values: sigma,
        energy,
        threshold: energy_threshold,
        level: snapshots.level(),
        shape: snapshots.shape(),
    })
}

/// POD coordinates of one field.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector {
    pub c: Vec<f64>,
    pub level: usize,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.modes.ncols()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> ScalarField {
        unflatten(&self.modes.column(k).into_owned(), self.shape, self.level)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Captured fraction of snapshot energy.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn project(&self, field: &ScalarField) -> Result<CoeffVector> {
        if field.dims() != self.shape {
            return Err(Error::Data(format!(
                "field shape {:?} does not match basis shape {:?}",
                field.dims(),
                self.shape
            )));
        }
        let c = self.modes.tr_mul(&flatten(field));
        Ok(CoeffVector {
            c: c.iter().copied().collect(),
            level: self.level,
        })
    }

    pub fn reconstruct(&self, coeffs: &CoeffVector) -> Result<ScalarField> {
        if coeffs.c.len() != self.dim() {
            return Err(Error::Data(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.c.len(),
                self.dim()
            )));
        }
        let v = &self.modes * DVector::from_column_slice(&coeffs.c);
        Ok(unflatten(&v, self.shape, self.level))
    }

    fn header(&self) -> BasisHeader {
        BasisHeader {
            level: self.level,
            rows: self.shape.0,
            cols: self.shape.1,
            dim: self.dim(),
            threshold: self.threshold,
            energy: self.energy,
            singular_values: self.singular_values.clone(),
        }
    }

    /// Binary modes (`n × dim`) and JSON sidecar.
    pub fn to_parts(&self) -> (Vec<u8>, String) {
        let m = &self.modes;
        let arr = Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)]);
        let json = serde_json::to_string_pretty(&self.header()).expect("header serializes");
        (binio::encode(&[&arr]), json)
    }

    pub fn from_parts(bin: &[u8], json: &[u8]) -> Result<Self> {
        let h: BasisHeader = serde_json::from_slice(json).map_err(|e| Error::Decode(e.to_string()))?;
        let arrays = binio::decode(bin)?;
        let [arr]: [Array2<f64>; 1] = arrays
            .try_into()
            .map_err(|v: Vec<_>| Error::Decode(format!("expected 1 array, found {}", v.len())))?;
        let n = h.rows.checked_mul(h.cols).ok_or_else(|| Error::Decode("shape overflow".into()))?;
        if arr.dim() != (n, h.dim) || h.dim == 0 {
            return Err(Error::Decode(format!(
                "modes are {:?}, header says {}x{} grid with {} modes",
                arr.dim(),
                h.rows,
                h.cols,
                h.dim
            )));
        }
        if h.singular_values.len() < h.dim {
            return Err(Error::Decode("fewer singular values than modes".into()));
        }
        let modes = DMatrix::from_fn(n, h.dim, |i, j| arr[[i, j]]);
        Ok(PodBasis {
            modes,
            singular_values: h.singular_values,
            energy: h.energy,
            threshold: h.threshold,
            level: h.level,
            shape: (h.rows, h.cols),
        })
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let (bin, json) = self.to_parts();
        let bin_path = dir.join(format!("{stem}.bin"));
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))?;
        std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let bin_path = dir.join(format!("{stem}.bin"));
        let json_path = dir.join(format!("{stem}.json"));
        let bin = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let json = std::fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
        PodBasis::from_parts(&bin, &json).map_err(|e| Error::load(&bin_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(vals: Vec<f64>, shape: (usize, usize)) -> ScalarField {
        ScalarField::new(Array2::from_shape_vec(shape, vals).unwrap(), 0)
    }

    fn orthonormality_error(b: &PodBasis) -> f64 {
        let g = b.modes().tr_mul(b.modes());
        let mut err: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[(i, j)] - e).abs());
            }
        }
        err
    }

    fn random_snapshots(rng: &mut ChaCha8Rng, shape: (usize, usize), n: usize) -> Vec<ScalarField> {
        (0..n)
            .map(|_| field((0..shape.0 * shape.1).map(|_| rng.random_range(-1.0..1.0)).collect(), shape))
            .collect()
    }

    #[test]
    fn single_snapshot_is_rank_one() {
        let s = field(vec![3.0, 0.0, -4.0, 0.0], (2, 2));
        let snap = SnapshotMatrix::from_fields([&s], 0).unwrap();
        let b = fit_pod(&snap, 0.9999).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.singular_values()[0] - 5.0).abs() < 1e-12);
        // sign convention: largest magnitude entry (-4) flips positive
        let m = b.mode(0);
        assert!((m.values[[1, 0]] - 0.8).abs() < 1e-12);
        assert!((m.values[[0, 0]] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn synthetic_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = (6, 9);
        let n = shape.0 * shape.1;
        let a: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.11).cos() + 0.5).collect();
        let fields: Vec<ScalarField> = (0..12)
            .map(|_| {
                let (p, q) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                field(a.iter().zip(&b).map(|(x, y)| p * x + q * y).collect(), shape)
            })
            .collect();
        let snap = SnapshotMatrix::from_fields(&fields, 0).unwrap();
        // independent route: full SVD of the snapshot matrix
        let oracle = snap.matrix().clone().svd(false, false).singular_values;
        let mut oracle: Vec<f64> = oracle.iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        assert!(oracle[2] < 1e-12 * oracle[0]);
        let basis = fit_pod(&snap, 1.0 - 1e-12).unwrap();
        assert_eq!(basis.dim(), 2);
        for k in 0..2 {
            assert!((basis.singular_values()[k] - oracle[k]).abs() < 1e-10 * oracle[0]);
        }
        assert!(orthonormality_error(&basis) < 1e-10);
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields = random_snapshots(&mut rng, (4, 5), 6);
        let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), 1.0).unwrap();
        assert_eq!(basis.dim(), 6);

        let c = basis.project(&basis.mode(0)).unwrap();
        assert!((c.c[0] - 1.0).abs() < 1e-12);
        assert!(c.c[1..].iter().all(|v| v.abs() < 1e-12));

        let zero = basis.project(&ScalarField::zeros((4, 5), 0)).unwrap();
        assert!(zero.c.iter().all(|&v| v == 0.0));

        let combo = ScalarField::new(&basis.mode(0).values * 2.0 + &basis.mode(1).values * 3.0, 0);
        let c = basis.project(&combo).unwrap();
        assert!((c.c[0] - 2.0).abs() < 1e-12 && (c.c[1] - 3.0).abs() < 1e-12);
        assert!(c.c[2..].iter().all(|v| v.abs() < 1e-12));

        let e1 = CoeffVector { c: (0..6).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(), level: 0 };
        assert!(basis.reconstruct(&e1).unwrap().max_abs_diff(&basis.mode(0)) < 1e-15);
        let z = CoeffVector { c: vec![0.0; 6], level: 0 };
        assert!(basis.reconstruct(&z).unwrap().values.iter().all(|&v| v == 0.0));

        assert!(basis.project(&ScalarField::zeros((5, 4), 0)).is_err());
        assert!(basis.reconstruct(&CoeffVector { c: vec![1.0], level: 0 }).is_err());
    }

    #[test]
    fn full_threshold_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (shape, n) in [((5, 8), 12), ((3, 4), 20)] {
            let fields = random_snapshots(&mut rng, shape, n);
            let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), 1.0).unwrap();
            assert!(orthonormality_error(&basis) < 1e-10);
            if n <= shape.0 * shape.1 {
                for f in &fields {
                    let back = basis.reconstruct(&basis.project(f).unwrap()).unwrap();
                    let err = (&back.values - &f.values).mapv(|v| v * v).sum().sqrt();
                    let norm = f.values.mapv(|v| v * v).sum().sqrt();
                    assert!(err <= 1e-10 * norm);
                }
            }
        }
    }

    #[test]
    fn energy_accounting_and_best_approximation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = (6, 7);
        let fields: Vec<ScalarField> = (0..15)
            .map(|k| {
                let decay = 0.5f64.powi(k % 6);
                field((0..42).map(|i| 300.0 + decay * ((i * (k + 1)) as f64).sin() + rng.random_range(-0.01..0.01)).collect(), shape)
            })
            .collect();
        for threshold in [0.9, 0.9999, 0.999999999] {
            let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), threshold).unwrap();
            assert!(basis.energy() >= threshold);
            let (mut err, mut tot) = (0.0, 0.0);
            for f in &fields {
                let c = basis.project(f).unwrap();
                let back = basis.reconstruct(&c).unwrap();
                let e = (&back.values - &f.values).mapv(|v| v * v).sum();
                err += e;
                tot += f.values.mapv(|v| v * v).sum();
                // any other coefficients in the same span do no better
                for _ in 0..5 {
                    let other = CoeffVector {
                        c: c.c.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect(),
                        level: 0,
                    };
                    let o = basis.reconstruct(&other).unwrap();
                    assert!((&o.values - &f.values).mapv(|v| v * v).sum() >= e - 1e-9);
                }
            }
            assert!(err / tot <= 1.0 - threshold + 1e-10);
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fields = random_snapshots(&mut rng, (4, 6), 8);
        let scaled: Vec<ScalarField> = fields.iter().map(|f| ScalarField::new(&f.values * -3.0, 0)).collect();
        let a = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), 0.99).unwrap();
        let b = fit_pod(&SnapshotMatrix::from_fields(&scaled, 0).unwrap(), 0.99).unwrap();
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.singular_values().iter().zip(b.singular_values()) {
            assert!((3.0 * x - y).abs() < 1e-10);
        }
        for k in 0..a.dim() {
            let (u, v) = (a.mode(k), b.mode(k));
            let same = u.max_abs_diff(&v);
            let flipped = u.max_abs_diff(&ScalarField::new(-&v.values, 0));
            assert!(same.min(flipped) < 1e-10);
        }
    }

    #[test]
    fn full_threshold_keeps_modes_below_rounding_of_total() {
        // σ_k² / σ_0² ~ 1e-17 vanishes in a prefix sum of energies
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fields: Vec<ScalarField> = (0..8)
            .map(|_| field((0..20).map(|_| 300.0 + 1e-6 * rng.random_range(-1.0..1.0)).collect(), (4, 5)))
            .collect();
        let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), 1.0).unwrap();
        assert_eq!(basis.dim(), 8);
        for f in &fields {
            let back = basis.reconstruct(&basis.project(f).unwrap()).unwrap();
            let err = (&back.values - &f.values).mapv(|v| v * v).sum().sqrt();
            assert!(err <= 1e-12 * f.values.mapv(|v| v * v).sum().sqrt());
        }
    }

    #[test]
    fn wide_snapshot_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let fields = random_snapshots(&mut rng, (2, 3), 10);
        let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 0).unwrap(), 1.0).unwrap();
        assert_eq!(basis.dim(), 6);
        assert!(orthonormality_error(&basis) < 1e-10);
        for f in &fields {
            let back = basis.reconstruct(&basis.project(f).unwrap()).unwrap();
            assert!(back.max_abs_diff(f) < 1e-12);
        }
    }

    #[test]
    fn error_paths() {
        let z = ScalarField::zeros((3, 3), 0);
        let snap = SnapshotMatrix::from_fields([&z, &z], 0).unwrap();
        assert!(matches!(fit_pod(&snap, 0.99), Err(Error::Degenerate(_))));
        let one = ScalarField::new(Array2::ones((3, 3)), 0);
        let snap = SnapshotMatrix::from_fields([&one], 0).unwrap();
        assert!(fit_pod(&snap, 0.0).is_err());
        assert!(fit_pod(&snap, 1.5).is_err());
        assert!(SnapshotMatrix::from_fields(std::iter::empty(), 0).is_err());
        let other = ScalarField::zeros((2, 3), 0);
        assert!(SnapshotMatrix::from_fields([&one, &other], 0).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fields = random_snapshots(&mut rng, (3, 5), 4);
        let basis = fit_pod(&SnapshotMatrix::from_fields(&fields, 2).unwrap(), 0.95).unwrap();
        let dir = tempfile::tempdir().unwrap();
        basis.save(dir.path(), "level2_basis").unwrap();
        let back = PodBasis::load(dir.path(), "level2_basis").unwrap();
        assert_eq!(back.modes(), basis.modes());
        assert_eq!(back.singular_values(), basis.singular_values());
        assert_eq!((back.level(), back.shape(), back.dim()), (2, (3, 5), basis.dim()));
        let (bin, json) = basis.to_parts();
        assert!(PodBasis::from_parts(&bin[..bin.len() - 8], json.as_bytes()).is_err());
        assert!(PodBasis::from_parts(&bin, b"{}").is_err());
    }
}
