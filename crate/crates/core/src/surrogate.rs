//! Multi-level POD/GP thermal surrogate: training, prediction, evaluation
//! and bundle persistence.
//!
//! In multi-level mode each level's correction fields get their own basis and
//! coefficient GPs, and predictions are recomposed onto the finest grid. In
//! single-level mode only the finest raw solutions are modelled.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{build_boundary, GeometryParams, ParamBounds};
use crate::gp::{gp_fit, GpFitOptions, GpModel, InputScaling};
use crate::mesh::{generate_mesh, RelaxOptions, StructuredMesh};
use crate::multilevel::{recompose, LevelDecomposition, MAX_LEVELS};
use crate::pod::{fit_pod, CoeffVector, PodBasis, SnapshotMatrix};
use crate::thermal::{BoundaryConditions, ScalarField};

pub const BUNDLE_VERSION: u32 = 1;
pub const MAE_DEFINITION: &str = "mean over samples of mean |T_pred - T_true| over finest-grid nodes (K)";
pub const MRE_DEFINITION: &str = "mean over samples of mean |T_pred - T_true| / (max T_true - min T_true)";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Multi,
    Single,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi" => Ok(Mode::Multi),
            "single" => Ok(Mode::Single),
            other => Err(Error::InputDomain(format!("mode must be multi or single, got {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Multi => "multi",
            Mode::Single => "single",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// POD energy threshold for every level without an override.
    pub energy_threshold: f64,
    /// Per-level thresholds, coarsest first.
    pub level_thresholds: Option<Vec<f64>>,
    pub gp: GpFitOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Multi,
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            level_thresholds: None,
            gp: GpFitOptions::default(),
        }
    }
}

/// Snapshots are uncentered, so the first mode carries the ~325 K mean level
/// and almost all of the energy; a threshold of 0.9999 would leave kelvin-size
/// residuals.
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 1.0 - 1e-10;

impl TrainConfig {
    fn threshold(&self, level: usize) -> f64 {
        self.level_thresholds
            .as_ref()
            .and_then(|t| t.get(level).copied())
            .unwrap_or(self.energy_threshold)
    }
}

#[derive(Clone, Debug)]
pub struct LevelModel {
    pub basis: PodBasis,
    /// One per retained coefficient.
    pub gps: Vec<GpModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub dims: (usize, usize),
    pub pod_dim: usize,
    pub energy: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateManifest {
    pub version: u32,
    pub id: String,
    pub mode: Mode,
    /// Dataset hierarchy, coarsest first.
    pub dims: Vec<(usize, usize)>,
    pub bounds: ParamBounds,
    pub bc: BoundaryConditions,
    pub relax: RelaxOptions,
    pub train: TrainConfig,
    pub train_ids: Vec<usize>,
    pub levels: Vec<LevelSummary>,
    pub mae_definition: String,
    pub mre_definition: String,
}

impl SurrogateManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: SurrogateManifest = serde_json::from_slice(bytes).map_err(|e| Error::Decode(e.to_string()))?;
        if m.version != BUNDLE_VERSION {
            return Err(Error::Decode(format!(
                "bundle version {} (this build reads {BUNDLE_VERSION})",
                m.version
            )));
        }
        let expected = match m.mode {
            Mode::Multi => m.dims.len(),
            Mode::Single => 1,
        };
        if m.dims.is_empty() || m.dims.len() > MAX_LEVELS || m.levels.len() != expected {
            return Err(Error::Decode(format!(
                "{} level models for mode {} over {} dataset levels",
                m.levels.len(),
                m.mode,
                m.dims.len()
            )));
        }
        ParamBounds::new(m.bounds.lower, m.bounds.upper).map_err(|e| Error::Decode(e.to_string()))?;
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct ThermalSurrogate {
    manifest: SurrogateManifest,
    levels: Vec<LevelModel>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub field: ScalarField,
    /// Parameters outside the training bounds.
    pub out_of_range: bool,
}

#[derive(Clone, Debug)]
pub struct CombinedPrediction {
    pub mesh: StructuredMesh,
    pub field: ScalarField,
    pub params: GeometryParams,
    pub surrogate_id: String,
    pub out_of_range: bool,
}

fn fit_level(
    level: usize,
    snapshots: &SnapshotMatrix,
    inputs: &[Vec<f64>],
    scaling: &InputScaling,
    cfg: &TrainConfig,
) -> Result<LevelModel> {
    let basis = fit_pod(snapshots, cfg.threshold(level)).map_err(|e| e.at_level(level))?;
    let coeffs: Vec<CoeffVector> = (0..snapshots.n_snapshots())
        .map(|k| basis.project(&snapshots.snapshot(k)))
        .collect::<Result<_>>()?;
    let gps = (0..basis.dim())
        .into_par_iter()
        .map(|i| {
            let y: Vec<f64> = coeffs.iter().map(|c| c.c[i]).collect();
            let opts = GpFitOptions {
                seed: cfg.gp.seed.wrapping_add(((level as u64) << 32) | i as u64),
                ..cfg.gp.clone()
            };
            gp_fit(inputs, &y, Some(scaling.clone()), &opts).map_err(|e| Error::Coefficient {
                level,
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "level {level}: {:?} grid, {} modes, energy 1-{:.3e}",
        snapshots.shape(),
        basis.dim(),
        1.0 - basis.energy()
    );
    Ok(LevelModel { basis, gps })
}

fn surrogate_id(mode: Mode, dims: &[(usize, usize)], ids: &[usize], seed: u64) -> String {
    // FNV-1a over the training ids
    let mut h: u64 = 0xcbf29ce484222325;
    for id in ids {
        for b in (*id as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    let (r, c) = dims.last().copied().unwrap_or((0, 0));
    format!("{mode}-L{}-{r}x{c}-n{}-s{seed}-{h:016x}", dims.len(), ids.len())
}

pub fn train_thermal(dataset: &Dataset, cfg: &TrainConfig) -> Result<ThermalSurrogate> {
    if dataset.len() < 2 {
        return Err(Error::Data(format!("need at least 2 training samples, have {}", dataset.len())));
    }
    let dm = dataset.manifest();
    let levels = dm.dims.len();
    for s in dataset.samples() {
        if s.tilde.len() != levels || s.solutions.len() != levels {
            return Err(Error::Data(format!("sample {} is missing levels", s.id)));
        }
    }
    let bounds = dm.bounds.clone();
    let scaling = InputScaling::new(bounds.lower.to_vec(), bounds.upper.to_vec())?;
    let inputs: Vec<Vec<f64>> = dataset.samples().iter().map(|s| s.params.to_array().to_vec()).collect();
    let per_level: Vec<SnapshotMatrix> = match cfg.mode {
        Mode::Multi => (0..levels)
            .map(|l| SnapshotMatrix::from_fields(dataset.samples().iter().map(|s| &s.tilde[l]), l))
            .collect::<Result<_>>()?,
        Mode::Single => vec![SnapshotMatrix::from_fields(dataset.samples().iter().map(|s| s.finest()), 0)?],
    };
    let models: Vec<LevelModel> = per_level
        .iter()
        .enumerate()
        .map(|(l, snap)| fit_level(l, snap, &inputs, &scaling, cfg))
        .collect::<Result<_>>()?;
    let train_ids: Vec<usize> = dataset.samples().iter().map(|s| s.id).collect();
    let manifest = SurrogateManifest {
        version: BUNDLE_VERSION,
        id: surrogate_id(cfg.mode, &dm.dims, &train_ids, cfg.gp.seed),
        mode: cfg.mode,
        dims: dm.dims.clone(),
        bounds,
        bc: dm.config.bc.clone(),
        relax: dm.config.relax.clone(),
        train: cfg.clone(),
        train_ids,
        levels: models
            .iter()
            .enumerate()
            .map(|(l, m)| LevelSummary {
                level: l,
                dims: m.basis.shape(),
                pod_dim: m.basis.dim(),
                energy: m.basis.energy(),
                threshold: m.basis.threshold(),
            })
            .collect(),
        mae_definition: MAE_DEFINITION.into(),
        mre_definition: MRE_DEFINITION.into(),
    };
    Ok(ThermalSurrogate { manifest, levels: models })
}

impl ThermalSurrogate {
    pub fn manifest(&self) -> &SurrogateManifest {
        &self.manifest
    }

    pub fn levels(&self) -> &[LevelModel] {
        &self.levels
    }

    pub fn mode(&self) -> Mode {
        self.manifest.mode
    }

    pub fn finest_dims(&self) -> (usize, usize) {
        *self.manifest.dims.last().expect("validated non-empty")
    }

    /// Predicted finest-level field on the computational plane.
    pub fn predict(&self, params: &GeometryParams) -> Result<Prediction> {
        params.check_finite()?;
        let out_of_range = !params.is_within(&self.manifest.bounds);
        if out_of_range {
            log::warn!("parameters {params} lie outside the training bounds");
        }
        let x = params.to_array();
        let parts: Vec<ScalarField> = self
            .levels
            .iter()
            .map(|m| {
                let c = m.gps.iter().map(|gp| gp.predict(&x).map(|p| p.0)).collect::<Result<Vec<_>>>()?;
                m.basis.reconstruct(&CoeffVector { c, level: m.basis.level() })
            })
            .collect::<Result<_>>()?;
        let field = match self.manifest.mode {
            Mode::Multi => recompose(&LevelDecomposition { tilde: parts })?,
            Mode::Single => parts.into_iter().next().expect("one level"),
        };
        Ok(Prediction {
            field: field.with_level(self.manifest.dims.len() - 1),
            out_of_range,
        })
    }

    /// Finest body-fitted mesh paired with the predicted field.
    pub fn predict_combined(&self, params: &GeometryParams) -> Result<CombinedPrediction> {
        let pred = self.predict(params)?;
        let (n_eta, n_xi) = self.finest_dims();
        let boundary = build_boundary(params, n_xi, n_eta, false)?;
        let mesh = generate_mesh(&boundary, &self.manifest.relax)?.mesh;
        Ok(CombinedPrediction {
            mesh,
            field: pred.field,
            params: *params,
            surrogate_id: self.manifest.id.clone(),
            out_of_range: pred.out_of_range,
        })
    }

    /// `manifest.json` plus `level{l}_basis.{bin,json}` and
    /// `level{l}_gp{i}.{bin,json}`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (l, m) in self.levels.iter().enumerate() {
            m.basis.save(dir, &format!("level{l}_basis"))?;
            for (i, gp) in m.gps.iter().enumerate() {
                let (bin, json) = gp.to_parts();
                let bp = dir.join(format!("level{l}_gp{i}.bin"));
                let jp = dir.join(format!("level{l}_gp{i}.json"));
                std::fs::write(&bp, bin).map_err(|e| Error::io(&bp, e))?;
                std::fs::write(&jp, json + "\n").map_err(|e| Error::io(&jp, e))?;
            }
        }
        binio::write_json(&dir.join("manifest.json"), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest = SurrogateManifest::from_json(&bytes).map_err(|e| Error::load(&mpath, e))?;
        let mut levels = Vec::with_capacity(manifest.levels.len());
        for (l, summary) in manifest.levels.iter().enumerate() {
            let basis = PodBasis::load(dir, &format!("level{l}_basis"))?;
            if basis.dim() != summary.pod_dim || basis.shape() != summary.dims {
                return Err(Error::load(dir.join(format!("level{l}_basis.bin")), Error::Decode("basis disagrees with manifest".into())));
            }
            let mut gps = Vec::with_capacity(basis.dim());
            for i in 0..basis.dim() {
                let bp = dir.join(format!("level{l}_gp{i}.bin"));
                let jp = dir.join(format!("level{l}_gp{i}.json"));
                let bin = std::fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
                let json = std::fs::read(&jp).map_err(|e| Error::io(&jp, e))?;
                let gp = GpModel::from_parts(&bin, &json).map_err(|e| Error::load(&bp, e))?;
                if gp.input_dim() != 5 {
                    return Err(Error::load(&bp, Error::Decode("GP input dimension must be 5".into())));
                }
                gps.push(gp);
            }
            levels.push(LevelModel { basis, gps });
        }
        Ok(ThermalSurrogate { manifest, levels })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: usize,
    pub mae: f64,
    pub mre: f64,
    pub max_abs: f64,
    pub out_of_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Kelvin.
    pub mae: f64,
    /// Fraction, not percent.
    pub mre: f64,
    pub per_sample: Vec<SampleMetrics>,
}

/// Error of one predicted field against its reference.
pub fn sample_metrics(id: usize, pred: &ScalarField, truth: &ScalarField) -> Result<SampleMetrics> {
    if pred.dims() != truth.dims() {
        return Err(Error::Data(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
    }
    let n = truth.values.len() as f64;
    let mut sum = 0.0;
    let mut max_abs: f64 = 0.0;
    for (p, t) in pred.values.iter().zip(truth.values.iter()) {
        let e = (p - t).abs();
        sum += e;
        max_abs = max_abs.max(e);
    }
    let hi = truth.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = truth.values.iter().copied().fold(f64::INFINITY, f64::min);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::Degenerate(format!("sample {id}: reference field has no temperature span")));
    }
    let mae = sum / n;
    Ok(SampleMetrics { id, mae, mre: mae / span, max_abs, out_of_range: false })
}

pub fn aggregate(per_sample: Vec<SampleMetrics>) -> Result<Metrics> {
    if per_sample.is_empty() {
        return Err(Error::InputDomain("no samples to evaluate".into()));
    }
    let n = per_sample.len() as f64;
    Ok(Metrics {
        mae: per_sample.iter().map(|s| s.mae).sum::<f64>() / n,
        mre: per_sample.iter().map(|s| s.mre).sum::<f64>() / n,
        per_sample,
    })
}

/// MAE and MRE of the surrogate over the finest-level truth of `test`.
pub fn evaluate(surrogate: &ThermalSurrogate, test: &Dataset) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::InputDomain("empty test set".into()));
    }
    if test.manifest().dims.last() != surrogate.manifest.dims.last() {
        return Err(Error::Data("test set finest grid differs from the surrogate's".into()));
    }
    let per = test
        .samples()
        .par_iter()
        .map(|s| {
            let p = surrogate.predict(&s.params)?;
            let mut m = sample_metrics(s.id, &p.field, s.finest())?;
            m.out_of_range = p.out_of_range;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_lhs, GenerationConfig};
    use ndarray::Array2;

    fn toy(n: usize, levels: usize) -> Dataset {
        let cfg = GenerationConfig { levels, base_dims: (5, 9), ..Default::default() };
        generate_lhs(n, &ParamBounds::reference(), 4, &cfg).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig { gp: GpFitOptions { budget: 40, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn metric_examples() {
        let truth = ScalarField::new(Array2::from_shape_fn((3, 4), |(i, j)| 300.0 + 10.0 * i as f64 + j as f64), 0);
        let same = sample_metrics(0, &truth, &truth).unwrap();
        assert_eq!((same.mae, same.mre), (0.0, 0.0));
        let off = ScalarField::new(&truth.values + 0.5, 0);
        assert!((sample_metrics(0, &off, &truth).unwrap().mae - 0.5).abs() < 1e-12);

        // three samples with hand-set errors; span of truth is 23 K
        let errs = [0.1, 0.2, 0.6];
        let per: Vec<SampleMetrics> = errs
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let mut p = truth.values.clone();
                p[[0, 0]] += e * 12.0;
                sample_metrics(k, &ScalarField::new(p, 0), &truth).unwrap()
            })
            .collect();
        let m = aggregate(per).unwrap();
        assert!((m.mae - 0.3).abs() < 1e-12);
        assert!((m.mre - 0.3 / 23.0).abs() < 1e-12);
        assert!(aggregate(vec![]).is_err());
        let flat = ScalarField::new(Array2::from_elem((2, 2), 1.0), 0);
        assert!(sample_metrics(0, &flat, &flat).is_err());
    }

    #[test]
    fn two_sample_rank_bound() {
        let ds = toy(2, 2);
        for mode in [Mode::Multi, Mode::Single] {
            let s = train_thermal(&ds, &TrainConfig { mode, ..quick() }).unwrap();
            for lvl in s.levels() {
                assert!(lvl.basis.dim() <= 2);
                assert_eq!(lvl.gps.len(), lvl.basis.dim());
            }
        }
        assert!(train_thermal(&ds.take(1).unwrap(), &quick()).is_err());
    }

    #[test]
    fn training_samples_round_trip() {
        let ds = toy(6, 2);
        let cfg = TrainConfig { gp: GpFitOptions { fixed_noise: Some(1e-10), budget: 60, ..Default::default() }, ..Default::default() };
        let s = train_thermal(&ds, &cfg).unwrap();
        for smp in ds.samples() {
            let p = s.predict(&smp.params).unwrap();
            assert!(!p.out_of_range);
            let err = (&p.field.values - &smp.finest().values).mapv(|v| v * v).sum().sqrt();
            let norm = smp.finest().values.mapv(|v| v * v).sum().sqrt();
            assert!(err / norm < 1e-4, "relative error {}", err / norm);
        }
        let a = s.predict(&ds.samples()[0].params).unwrap().field;
        let b = s.predict(&ds.samples()[0].params).unwrap().field;
        assert_eq!(a, b);
    }

    #[test]
    fn single_level_ignores_coarse_data() {
        let ds = toy(5, 2);
        let cfg = TrainConfig { mode: Mode::Single, ..quick() };
        let base = train_thermal(&ds, &cfg).unwrap();
        let mut samples = ds.samples().to_vec();
        for s in &mut samples {
            s.solutions[0].values.mapv_inplace(|v| v + 17.0);
            s.tilde[0].values.mapv_inplace(|v| v * 3.0);
        }
        let perturbed = Dataset::from_parts(ds.manifest().clone(), samples).unwrap();
        let other = train_thermal(&perturbed, &cfg).unwrap();
        let q = GeometryParams::new(125.0, 13.0, 15.0, 35.0, 50.0);
        assert_eq!(base.predict(&q).unwrap().field, other.predict(&q).unwrap().field);
    }

    #[test]
    fn combined_prediction_and_flag() {
        let ds = toy(4, 2);
        let s = train_thermal(&ds, &quick()).unwrap();
        let q = GeometryParams::new(152.0, 13.0, 15.0, 35.0, 50.0);
        let c = s.predict_combined(&q).unwrap();
        assert!(c.out_of_range);
        assert_eq!(c.mesh.dims(), c.field.dims());
        assert_eq!(c.mesh.dims(), s.finest_dims());
        let (n_eta, n_xi) = s.finest_dims();
        assert!(c.mesh.matches_boundary(&build_boundary(&q, n_xi, n_eta, false).unwrap()));
        assert_eq!(c.surrogate_id, s.manifest().id);
    }

    #[test]
    fn bundle_round_trip() {
        let ds = toy(4, 2);
        let s = train_thermal(&ds, &quick()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = ThermalSurrogate::load(dir.path()).unwrap();
        assert_eq!(back.manifest(), s.manifest());
        let q = GeometryParams::new(120.0, 11.0, 25.0, 30.0, 60.0);
        assert_eq!(back.predict(&q).unwrap().field, s.predict(&q).unwrap().field);
        let m = evaluate(&back, &ds).unwrap();
        assert_eq!(m, evaluate(&s, &ds).unwrap());

        std::fs::remove_file(dir.path().join("level1_gp0.json")).unwrap();
        let err = ThermalSurrogate::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("level1_gp0"), "{err}");
    }
}
