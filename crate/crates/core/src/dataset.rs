//! Latin-hypercube sampling, ground-truth generation over the level
//! hierarchy, splitting and on-disk persistence.
//!
//! A dataset directory holds `manifest.json` and one blob per sample under
//! `samples/`. Each blob is a [`binio`] container with arrays in this order:
//! params (1×5), the `L` level solutions coarsest first, the `L` level
//! corrections coarsest first, then the finest mesh `x` and `y`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::geometry::{GeometryParams, ParamBounds};
use crate::mesh::{RelaxOptions, StructuredMesh};
use crate::multilevel::{build_hierarchy, decompose, level_dims, MAX_LEVELS};
use crate::thermal::{solve_laplace, BoundaryConditions, ScalarField, SolveOptions};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Largest tolerated fraction of failed samples.
pub const MAX_EXCLUSION_RATE: f64 = 0.01;

/// One point per equal-width stratum in every dimension, jittered inside its
/// stratum, strata paired by independent per-dimension shuffles.
pub fn lhs_sample(n: usize, bounds: &ParamBounds, seed: u64) -> Result<Vec<GeometryParams>> {
    if n == 0 {
        return Err(Error::InputDomain("LHS needs at least one sample".into()));
    }
    ParamBounds::new(bounds.lower, bounds.upper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = vec![[0.0; 5]; n];
    for d in 0..5 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, k) in unit.iter_mut().zip(strata) {
            row[d] = (k as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    Ok(unit.iter().map(|u| bounds.denormalize(u)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub levels: usize,
    /// Coarsest `(n_eta, n_xi)`.
    pub base_dims: (usize, usize),
    pub bc: BoundaryConditions,
    pub relax: RelaxOptions,
    pub solve: SolveOptions,
    pub strict: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            levels: 3,
            base_dims: (8, 32),
            bc: BoundaryConditions::default(),
            relax: RelaxOptions::default(),
            solve: SolveOptions::default(),
            strict: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub file: String,
    pub params: GeometryParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedSample {
    pub id: usize,
    pub params: GeometryParams,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub train_fraction: f64,
    pub part: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub generator: String,
    pub bounds: ParamBounds,
    pub config: GenerationConfig,
    pub dims: Vec<(usize, usize)>,
    /// LHS seed, when the parameters came from [`lhs_sample`].
    pub seed: Option<u64>,
    pub split: Option<SplitInfo>,
    pub samples: Vec<SampleEntry>,
    pub excluded: Vec<ExcludedSample>,
}

impl DatasetManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_slice(bytes).map_err(|e| Error::Decode(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Decode(format!(
                "manifest version {} (this build reads {MANIFEST_VERSION})",
                m.version
            )));
        }
        if m.config.levels == 0 || m.config.levels > MAX_LEVELS || m.dims != level_dims(m.config.base_dims, m.config.levels) {
            return Err(Error::Decode("manifest dims disagree with levels and base_dims".into()));
        }
        ParamBounds::new(m.bounds.lower, m.bounds.upper).map_err(|e| Error::Decode(e.to_string()))?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub params: GeometryParams,
    /// Level solutions, coarsest first.
    pub solutions: Vec<ScalarField>,
    /// Level corrections, coarsest first.
    pub tilde: Vec<ScalarField>,
    pub mesh: StructuredMesh,
}

impl Sample {
    pub fn finest(&self) -> &ScalarField {
        self.solutions.last().expect("samples hold at least one level")
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let p = Array2::from_shape_vec((1, 5), self.params.to_array().to_vec()).expect("1x5");
        let mut arrays: Vec<&Array2<f64>> = vec![&p];
        arrays.extend(self.solutions.iter().map(|f| &f.values));
        arrays.extend(self.tilde.iter().map(|f| &f.values));
        arrays.push(self.mesh.x());
        arrays.push(self.mesh.y());
        binio::encode(&arrays)
    }

    /// Decode a blob and check its shapes against the level dims.
    pub fn from_blob(bytes: &[u8], id: usize, dims: &[(usize, usize)]) -> Result<Self> {
        let levels = dims.len();
        let mut arrays = binio::decode(bytes)?;
        if arrays.len() != 2 * levels + 3 {
            return Err(Error::Decode(format!(
                "expected {} arrays for {levels} levels, found {}",
                2 * levels + 3,
                arrays.len()
            )));
        }
        if arrays[0].dim() != (1, 5) {
            return Err(Error::Decode("params array must be 1x5".into()));
        }
        for (k, a) in arrays[1..].iter().enumerate() {
            let want = if k < 2 * levels { dims[k % levels] } else { dims[levels - 1] };
            if a.dim() != want {
                return Err(Error::Decode(format!("array {} has shape {:?}, expected {want:?}", k + 1, a.dim())));
            }
        }
        let y = arrays.pop().expect("checked count");
        let x = arrays.pop().expect("checked count");
        let mesh = StructuredMesh::new(x, y).map_err(|e| Error::Decode(e.to_string()))?;
        let mut it = arrays.into_iter();
        let p = it.next().expect("checked count");
        let params = GeometryParams::from_array([p[[0, 0]], p[[0, 1]], p[[0, 2]], p[[0, 3]], p[[0, 4]]]);
        let fields: Vec<ScalarField> = it.enumerate().map(|(k, a)| ScalarField::new(a, k % levels)).collect();
        let (solutions, tilde) = fields.split_at(levels);
        Ok(Sample {
            id,
            params,
            solutions: solutions.to_vec(),
            tilde: tilde.to_vec(),
            mesh,
        })
    }
}

/// Ground truth for one geometry: mesh hierarchy, level solves, decomposition.
pub fn generate_sample(id: usize, params: &GeometryParams, config: &GenerationConfig) -> Result<Sample> {
    let hierarchy = build_hierarchy(params, config.levels, config.base_dims, &config.relax)?;
    let solutions = hierarchy
        .levels
        .iter()
        .enumerate()
        .map(|(l, mesh)| {
            solve_laplace(mesh, &config.bc, &config.solve)
                .map(|f| f.with_level(l))
                .map_err(|e| e.at_level(l))
        })
        .collect::<Result<Vec<_>>>()?;
    let tilde = decompose(&solutions)?.tilde;
    let mesh = hierarchy.levels.last().expect("levels >= 1").clone();
    Ok(Sample {
        id,
        params: *params,
        solutions,
        tilde,
        mesh,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    manifest: DatasetManifest,
    samples: Vec<Sample>,
}

fn sample_file(id: usize) -> String {
    format!("samples/sample_{id:05}.bin")
}

/// Generate samples on the current rayon pool; ids are list positions and
/// the result does not depend on the worker count.
pub fn generate(
    params_list: &[GeometryParams],
    config: &GenerationConfig,
    bounds: &ParamBounds,
    seed: Option<u64>,
) -> Result<Dataset> {
    if params_list.is_empty() {
        return Err(Error::InputDomain("no parameters to generate".into()));
    }
    config.bc.validate()?;
    if config.strict {
        for p in params_list {
            p.validate(bounds)?;
        }
    }
    let results: Vec<Result<Sample>> = params_list
        .par_iter()
        .enumerate()
        .map(|(id, p)| generate_sample(id, p, config))
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut excluded = Vec::new();
    for (id, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("excluding sample {id} ({}): {e}", params_list[id]);
                excluded.push(ExcludedSample {
                    id,
                    params: params_list[id],
                    reason: e.to_string(),
                });
            }
        }
    }
    let rate = excluded.len() as f64 / params_list.len() as f64;
    if rate > MAX_EXCLUSION_RATE {
        return Err(Error::Data(format!(
            "{} of {} samples failed (limit {:.0}%); first: {}",
            excluded.len(),
            params_list.len(),
            100.0 * MAX_EXCLUSION_RATE,
            excluded[0].reason
        )));
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        generator: format!("curvirom {}", env!("CARGO_PKG_VERSION")),
        bounds: bounds.clone(),
        config: config.clone(),
        dims: level_dims(config.base_dims, config.levels),
        seed,
        split: None,
        samples: samples
            .iter()
            .map(|s| SampleEntry { id: s.id, file: sample_file(s.id), params: s.params })
            .collect(),
        excluded,
    };
    Ok(Dataset { manifest, samples })
}

/// LHS parameters followed by [`generate`].
pub fn generate_lhs(n: usize, bounds: &ParamBounds, seed: u64, config: &GenerationConfig) -> Result<Dataset> {
    generate(&lhs_sample(n, bounds, seed)?, config, bounds, Some(seed))
}

impl Dataset {
    pub fn from_parts(manifest: DatasetManifest, samples: Vec<Sample>) -> Result<Self> {
        if samples.len() != manifest.samples.len() {
            return Err(Error::Data("manifest and sample list differ in length".into()));
        }
        for (s, e) in samples.iter().zip(&manifest.samples) {
            if s.id != e.id || s.params != e.params || s.solutions.len() != manifest.dims.len() {
                return Err(Error::Data(format!("sample {} does not match its manifest entry", s.id)));
            }
        }
        Ok(Dataset { manifest, samples })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.manifest.dims.len()
    }

    fn subset(&self, ids: &[usize], info: SplitInfo) -> Dataset {
        let samples: Vec<Sample> = ids.iter().map(|&k| self.samples[k].clone()).collect();
        let mut manifest = self.manifest.clone();
        manifest.samples = ids.iter().map(|&k| self.manifest.samples[k].clone()).collect();
        manifest.split = Some(info);
        Dataset { manifest, samples }
    }

    /// First `n` samples, for size studies.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InputDomain(format!("cannot take {n} of {} samples", self.len())));
        }
        let mut d = self.clone();
        d.samples.truncate(n);
        d.manifest.samples.truncate(n);
        Ok(d)
    }

    /// Seeded shuffle, then the first `round(n·fraction)` go to training.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InputDomain(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        let n = self.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::InputDomain(format!(
                "fraction {train_fraction} of {n} samples leaves one side empty"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let info = |part: &str| SplitInfo { seed, train_fraction, part: part.into() };
        Ok((self.subset(&order[..n_train], info("train")), self.subset(&order[n_train..], info("test"))))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let sdir = dir.join("samples");
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        for (s, e) in self.samples.iter().zip(&self.manifest.samples) {
            let path = dir.join(&e.file);
            std::fs::write(&path, s.to_blob()).map_err(|err| Error::io(&path, err))?;
        }
        binio::write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let mpath = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest = DatasetManifest::from_json(&bytes).map_err(|e| Error::load(&mpath, e))?;
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for e in &manifest.samples {
            let path: PathBuf = dir.join(&e.file);
            let blob = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let s = Sample::from_blob(&blob, e.id, &manifest.dims).map_err(|err| Error::load(&path, err))?;
            if s.params.to_array().map(f64::to_bits) != e.params.to_array().map(f64::to_bits) {
                return Err(Error::load(&path, Error::Decode("params differ from manifest".into())));
            }
            samples.push(s);
        }
        Ok(Dataset { manifest, samples })
    }
}
