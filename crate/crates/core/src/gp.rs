//! Scalar Gaussian-process regression with a rational quadratic kernel.
//!
//! Inputs are mapped to the unit box with stored bounds and targets are
//! standardized before fitting; both transforms are undone on prediction, so
//! the reported variance is in target units squared.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};

pub const NOISE_FLOOR: f64 = 1e-10;
pub const MAX_JITTER: f64 = 1e-4;

/// Hyperparameters; variances are in standardized target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RqKernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub alpha: f64,
    pub noise_variance: f64,
}

impl RqKernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.signal_variance) && ok(self.length_scale) && ok(self.alpha)) {
            return Err(Error::InputDomain(format!("kernel parameters must be positive: {self:?}")));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= NOISE_FLOOR) {
            return Err(Error::InputDomain(format!(
                "noise variance {} below floor {NOISE_FLOOR}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    fn at_sq_dist(&self, d2: f64) -> f64 {
        self.signal_variance * (1.0 + d2 / (2.0 * self.alpha * self.length_scale * self.length_scale)).powf(-self.alpha)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rq_kernel(a: &[f64], b: &[f64], params: &RqKernelParams) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("input dimensions {} and {} differ", a.len(), b.len())));
    }
    params.validate()?;
    Ok(params.at_sq_dist(sq_dist(a, b)))
}

/// Log-space search box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub length_scale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub alpha: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            length_scale: (1e-2, 1e1),
            signal_variance: (1e-4, 1e2),
            alpha: (1e-2, 1e3),
            noise_variance: (NOISE_FLOOR, 1e-2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpFitOptions {
    /// Total log-marginal-likelihood evaluations.
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
    /// Pin σ_n² instead of optimizing it.
    pub fixed_noise: Option<f64>,
    pub bounds: HyperBounds,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            budget: 200,
            starts: 8,
            seed: 0,
            fixed_noise: None,
            bounds: HyperBounds::default(),
        }
    }
}

/// Per-dimension affine map of inputs onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputScaling {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InputDomain("input scaling needs finite lower < upper per dimension".into()));
        }
        Ok(InputScaling { lower, upper })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GpHeader {
    params: RqKernelParams,
    jitter: f64,
    y_mean: f64,
    y_scale: f64,
    input_scaling: Option<InputScaling>,
    log_marginal_likelihood: f64,
}

#[derive(Clone, Debug)]
pub struct GpModel {
    /// Normalized training inputs, one row per sample.
    x: DMatrix<f64>,
    /// Standardized targets.
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    header: GpHeader,
}

fn pairwise_sq_dist(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let s = (x.row(i) - x.row(j)).norm_squared();
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

/// Factor `K + (σ_n² + jitter) I`, escalating jitter ×10 from the noise floor.
fn factor(d2: &DMatrix<f64>, params: &RqKernelParams) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let k = d2.map(|v| params.at_sq_dist(v));
    let mut jitter = 0.0;
    loop {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += params.noise_variance + jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { NOISE_FLOOR } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::Conditioning { jitter: MAX_JITTER });
        }
    }
}

fn log_marginal(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, weights: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * y.dot(weights) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn standardize(y: &[f64]) -> (f64, f64) {
    if y.len() == 1 {
        // mean 0 keeps the single-point posterior y0·σ²/(σ²+σ_n²)
        let s = y[0].abs();
        return (0.0, if s > 0.0 { s } else { 1.0 });
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let tiny = 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
    (mean, if std > tiny { std } else { 1.0 })
}

struct Objective<'a> {
    d2: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Linear-scale bounds; `exp(ln b)` can land just outside them.
    boxes: Vec<(f64, f64)>,
    fixed_noise: Option<f64>,
    evals: usize,
}

impl Objective<'_> {
    fn params(&self, theta: &[f64]) -> RqKernelParams {
        let t: Vec<f64> = theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h).exp())
            .zip(&self.boxes)
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect();
        RqKernelParams {
            length_scale: t[0],
            signal_variance: t[1],
            alpha: t[2],
            noise_variance: self.fixed_noise.unwrap_or_else(|| t[3]),
        }
    }

    /// Negative log marginal likelihood, `+inf` when unfactorable.
    fn eval(&mut self, theta: &[f64]) -> f64 {
        self.evals += 1;
        match factor(self.d2, &self.params(theta)) {
            Ok((chol, _)) => {
                let w = chol.solve(self.y);
                let v = -log_marginal(&chol, self.y, &w);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Bounded Nelder–Mead; points are clamped to the box.
fn nelder_mead(obj: &mut Objective, start: Vec<f64>, f_start: f64, budget: usize) -> (Vec<f64>, f64) {
    let dim = start.len();
    let clamp = |p: Vec<f64>, obj: &Objective| -> Vec<f64> {
        p.iter().zip(obj.lo.iter().zip(&obj.hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
    };
    let mut simplex = vec![(start.clone(), f_start)];
    let used0 = obj.evals;
    for k in 0..dim {
        let mut p = start.clone();
        let step = 0.25 * (obj.hi[k] - obj.lo[k]);
        p[k] = if p[k] + step <= obj.hi[k] { p[k] + step } else { p[k] - step };
        let p = clamp(p, obj);
        let f = obj.eval(&p);
        simplex.push((p, f));
    }
    while obj.evals - used0 < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|s| s.0[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let r = clamp(along(1.0), obj);
        let fr = obj.eval(&r);
        if fr < simplex[0].1 {
            let e = clamp(along(2.0), obj);
            let fe = obj.eval(&e);
            simplex[dim] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (r, fr);
        } else {
            let c = clamp(along(if fr < worst.1 { 0.5 } else { -0.5 }), obj);
            let fc = obj.eval(&c);
            if fc < worst.1.min(fr) {
                simplex[dim] = (c, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = best.iter().zip(&s.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    s.1 = obj.eval(&s.0);
                }
            }
        }
        let spread = simplex.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
            - simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        if spread.is_finite() && spread < 1e-10 {
            break;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

fn to_matrix(x: &[Vec<f64>], scaling: Option<&InputScaling>) -> Result<DMatrix<f64>> {
    let p = x.first().map(|r| r.len()).ok_or_else(|| Error::Data("no training inputs".into()))?;
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Data("training inputs have differing dimensions".into()));
    }
    if let Some(s) = scaling {
        if s.lower.len() != p {
            return Err(Error::Data(format!("input scaling has {} dimensions, inputs have {p}", s.lower.len())));
        }
    }
    let rows: Vec<Vec<f64>> = x.iter().map(|r| scaling.map_or_else(|| r.clone(), |s| s.apply(r))).collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training input".into()));
    }
    Ok(DMatrix::from_fn(x.len(), p, |i, j| rows[i][j]))
}

/// Fit hyperparameters by maximizing the log marginal likelihood: the box
/// centre and `starts − 1` random points are screened, then Nelder–Mead
/// refines the best with the remaining budget.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], scaling: Option<InputScaling>, opts: &GpFitOptions) -> Result<GpModel> {
    if x.len() != y.len() {
        return Err(Error::Data(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training target".into()));
    }
    if let Some(n) = opts.fixed_noise {
        if !(n.is_finite() && n >= NOISE_FLOOR) {
            return Err(Error::InputDomain(format!("fixed noise {n} below floor {NOISE_FLOOR}")));
        }
    }
    let xm = to_matrix(x, scaling.as_ref())?;
    let (y_mean, y_scale) = standardize(y);
    let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
    let d2 = pairwise_sq_dist(&xm);

    let b = &opts.bounds;
    let mut boxes = vec![b.length_scale, b.signal_variance, b.alpha];
    if opts.fixed_noise.is_none() {
        boxes.push(b.noise_variance);
    }
    if boxes.iter().any(|(l, h)| !(*l > 0.0 && l <= h && h.is_finite())) {
        return Err(Error::InputDomain(format!("invalid hyperparameter bounds {b:?}")));
    }
    let mut obj = Objective {
        d2: &d2,
        y: &ys,
        lo: boxes.iter().map(|b| b.0.ln()).collect(),
        hi: boxes.iter().map(|b| b.1.ln()).collect(),
        boxes: boxes.clone(),
        fixed_noise: opts.fixed_noise,
        evals: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..opts.starts.max(1) {
        let theta: Vec<f64> = obj
            .lo
            .iter()
            .zip(&obj.hi)
            .map(|(l, h)| if s == 0 || l == h { 0.5 * (l + h) } else { rng.random_range(*l..*h) })
            .collect();
        let f = obj.eval(&theta);
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((theta, f));
        }
    }
    let (mut theta, mut f) = best.expect("at least one start");
    let remaining = opts.budget.saturating_sub(obj.evals);
    if remaining > obj.lo.len() + 1 && f.is_finite() {
        (theta, f) = nelder_mead(&mut obj, theta, f, remaining);
    }
    if !f.is_finite() {
        return Err(Error::Conditioning { jitter: MAX_JITTER });
    }
    let params = obj.params(&theta);
    let model = GpModel::assemble(xm, ys, params, y_mean, y_scale, scaling)?;
    log::debug!(
        "gp fit: n={} lml={:.4} params={:?} jitter={:e}",
        y.len(),
        model.header.log_marginal_likelihood,
        params,
        model.header.jitter
    );
    Ok(model)
}

impl GpModel {
    fn assemble(
        x: DMatrix<f64>,
        y: DVector<f64>,
        params: RqKernelParams,
        y_mean: f64,
        y_scale: f64,
        input_scaling: Option<InputScaling>,
    ) -> Result<Self> {
        params.validate()?;
        let (chol, jitter) = factor(&pairwise_sq_dist(&x), &params)?;
        let weights = chol.solve(&y);
        let lml = log_marginal(&chol, &y, &weights);
        Ok(GpModel {
            x,
            y,
            chol,
            weights,
            header: GpHeader {
                params,
                jitter,
                y_mean,
                y_scale,
                input_scaling,
                log_marginal_likelihood: lml,
            },
        })
    }

    /// Plain GP with given hyperparameters: no input scaling or target
    /// standardization.
    pub fn with_params(x: &[Vec<f64>], y: &[f64], params: RqKernelParams) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!("{} inputs but {} targets", x.len(), y.len())));
        }
        let xm = to_matrix(x, None)?;
        GpModel::assemble(xm, DVector::from_column_slice(y), params, 0.0, 1.0, None)
    }

    pub fn params(&self) -> &RqKernelParams {
        &self.header.params
    }

    pub fn jitter(&self) -> f64 {
        self.header.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.header.log_marginal_likelihood
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Posterior mean and variance (target units) at a raw input.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.input_dim() {
            return Err(Error::Data(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let z = match &self.header.input_scaling {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        let p = &self.header.params;
        let ks = DVector::from_iterator(
            self.n_train(),
            self.x.row_iter().map(|r| p.at_sq_dist(r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum())),
        );
        let mean = ks.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has positive diagonal");
        let var = (p.signal_variance - v.norm_squared()).max(0.0);
        let s = self.header.y_scale;
        Ok((mean * s + self.header.y_mean, var * s * s))
    }

    /// Binary `[X, y, L, weights]` and JSON header.
    pub fn to_parts(&self) -> (Vec<u8>, String) {
        let arr = |m: &DMatrix<f64>| Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)]);
        let col = |v: &DVector<f64>| Array2::from_shape_fn((v.len(), 1), |(i, _)| v[i]);
        let l = self.chol.l();
        let bin = binio::encode(&[&arr(&self.x), &col(&self.y), &arr(&l), &col(&self.weights)]);
        let json = serde_json::to_string_pretty(&self.header).expect("header serializes");
        (bin, json)
    }

    pub fn from_parts(bin: &[u8], json: &[u8]) -> Result<Self> {
        let header: GpHeader = serde_json::from_slice(json).map_err(|e| Error::Decode(e.to_string()))?;
        header.params.validate().map_err(|e| Error::Decode(e.to_string()))?;
        if !(header.y_scale.is_finite() && header.y_scale > 0.0 && header.y_mean.is_finite()) {
            return Err(Error::Decode("invalid target standardization".into()));
        }
        let arrays = binio::decode(bin)?;
        let [x, y, l, w]: [Array2<f64>; 4] = arrays
            .try_into()
            .map_err(|v: Vec<_>| Error::Decode(format!("expected 4 arrays, found {}", v.len())))?;
        let n = x.nrows();
        if n == 0 || y.dim() != (n, 1) || l.dim() != (n, n) || w.dim() != (n, 1) {
            return Err(Error::Decode("inconsistent GP array shapes".into()));
        }
        if let Some(s) = &header.input_scaling {
            InputScaling::new(s.lower.clone(), s.upper.clone()).map_err(|e| Error::Decode(e.to_string()))?;
            if s.lower.len() != x.ncols() {
                return Err(Error::Decode("input scaling dimension mismatch".into()));
            }
        }
        if [&x, &y, &l, &w].iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::Decode("non-finite GP array entry".into()));
        }
        let mut lm = DMatrix::from_fn(n, n, |i, j| if j <= i { l[[i, j]] } else { 0.0 });
        if lm.diagonal().iter().any(|&d| d <= 0.0) {
            return Err(Error::Decode("factor diagonal must be positive".into()));
        }
        // keep the stored factor exactly; only the lower triangle is read
        lm.fill_upper_triangle(0.0, 1);
        let chol = Cholesky::pack_dirty(lm);
        Ok(GpModel {
            x: DMatrix::from_fn(n, x.ncols(), |i, j| x[[i, j]]),
            y: DVector::from_fn(n, |i, _| y[[i, 0]]),
            chol,
            weights: DVector::from_fn(n, |i, _| w[[i, 0]]),
            header,
        })
    }
}
