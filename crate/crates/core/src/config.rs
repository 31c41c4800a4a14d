//! Flat key-value run settings, as read from a TOML config file.

use serde::{Deserialize, Serialize};

use crate::dataset::GenerationConfig;
use crate::error::{Error, Result};
use crate::gp::GpFitOptions;
use crate::mesh::RelaxOptions;
use crate::multilevel::MAX_LEVELS;
use crate::surrogate::{Mode, TrainConfig, DEFAULT_ENERGY_THRESHOLD};
use crate::thermal::{BoundaryConditions, SideMode, SolveOptions};

/// A straight-side boundary: a temperature or `"blend"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideSetting {
    Value(f64),
    Word(String),
}

impl SideSetting {
    fn mode(&self, key: &str) -> Result<SideMode> {
        match self {
            SideSetting::Value(v) => Ok(SideMode::Constant(*v)),
            SideSetting::Word(w) if w == "blend" => Ok(SideMode::Blend),
            SideSetting::Word(w) => Err(Error::InputDomain(format!("{key} must be a number or \"blend\", got {w:?}"))),
        }
    }
}

/// `"HxW"` as `(n_eta, n_xi)`.
pub fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InputDomain(format!("dims must look like 8x32, got {text:?}"));
    let (h, w) = text.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h < 3 || w < 3 {
        return Err(Error::InputDomain(format!("dims {h}x{w} below the 3x3 minimum")));
    }
    Ok((h, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub seed: u64,
    pub strict: bool,
    pub mode: Mode,
    pub levels: usize,
    pub base_dims: String,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub samples: usize,
    pub train_fraction: f64,
    pub energy_threshold: f64,
    pub gp_budget: usize,
    pub gp_starts: usize,
    pub top_value: f64,
    pub bottom_value: f64,
    pub left_side: SideSetting,
    pub right_side: SideSetting,
    pub mesh_tol: f64,
    pub mesh_max_iter: usize,
    pub mesh_omega: f64,
    pub solve_tol: f64,
    pub solve_max_iter: usize,
    pub solve_omega: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        let bc = BoundaryConditions::default();
        let side = |m| match m {
            SideMode::Constant(v) => SideSetting::Value(v),
            SideMode::Blend => SideSetting::Word("blend".into()),
        };
        let (relax, solve, gp) = (RelaxOptions::default(), SolveOptions::default(), GpFitOptions::default());
        RunSettings {
            seed: 0,
            strict: false,
            mode: Mode::Multi,
            levels: 3,
            base_dims: "8x32".into(),
            threads: 0,
            samples: 300,
            train_fraction: 0.7,
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            gp_budget: gp.budget,
            gp_starts: gp.starts,
            top_value: bc.top_value,
            bottom_value: bc.bottom_value,
            left_side: side(bc.left_mode),
            right_side: side(bc.right_mode),
            mesh_tol: relax.tol,
            mesh_max_iter: relax.max_iter,
            mesh_omega: relax.omega,
            solve_tol: solve.tol,
            solve_max_iter: solve.max_iter,
            solve_omega: solve.omega,
        }
    }
}

impl RunSettings {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: RunSettings = toml::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }

    pub fn validate(&self) -> Result<()> {
        parse_dims(&self.base_dims)?;
        self.boundary_conditions()?;
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(Error::InputDomain(format!("levels must be in 1..={MAX_LEVELS}")));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InputDomain(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if !(self.energy_threshold > 0.0 && self.energy_threshold <= 1.0) {
            return Err(Error::InputDomain(format!("energy_threshold {} outside (0, 1]", self.energy_threshold)));
        }
        Ok(())
    }

    pub fn dims(&self) -> Result<(usize, usize)> {
        parse_dims(&self.base_dims)
    }

    pub fn boundary_conditions(&self) -> Result<BoundaryConditions> {
        let bc = BoundaryConditions {
            top_value: self.top_value,
            bottom_value: self.bottom_value,
            left_mode: self.left_side.mode("left_side")?,
            right_mode: self.right_side.mode("right_side")?,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn relax(&self) -> RelaxOptions {
        RelaxOptions {
            tol: self.mesh_tol,
            max_iter: self.mesh_max_iter,
            omega: self.mesh_omega,
            ..RelaxOptions::default()
        }
    }

    pub fn solve(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solve_tol,
            max_iter: self.solve_max_iter,
            omega: self.solve_omega,
            ..SolveOptions::default()
        }
    }

    pub fn generation(&self) -> Result<GenerationConfig> {
        Ok(GenerationConfig {
            levels: self.levels,
            base_dims: self.dims()?,
            bc: self.boundary_conditions()?,
            relax: self.relax(),
            solve: self.solve(),
            strict: self.strict,
        })
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            energy_threshold: self.energy_threshold,
            level_thresholds: None,
            gp: GpFitOptions {
                budget: self.gp_budget,
                starts: self.gp_starts,
                seed: self.seed,
                ..GpFitOptions::default()
            },
        }
    }
}
