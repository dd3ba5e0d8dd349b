//! Run configuration: one TOML file, every field defaulted, so an empty file
//! runs the default desk-scale battery.

use std::path::{Path, PathBuf};

use rev_euler::iteration::IterationConfig;
use rev_euler::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Seed of every sampled point set and pair set.
    pub seed: u64,
    pub iteration: IterationConfig,
    pub data: DataCheckConfig,
    pub kernel: KernelCheckConfig,
    pub limit: LimitConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 0,
            iteration: IterationConfig { horizon: 0.25, ..IterationConfig::default() },
            data: DataCheckConfig::default(),
            kernel: KernelCheckConfig::default(),
            limit: LimitConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataCheckConfig {
    /// Random points of the divergence check.
    pub divergence_points: usize,
    /// Random points of the finite-difference gradient check.
    pub gradient_points: usize,
    /// Grid on which the Hölder surrogates of the data are taken.
    pub holder_grid_n: usize,
}

impl Default for DataCheckConfig {
    fn default() -> Self {
        Self { divergence_points: 10_000, gradient_points: 1000, holder_grid_n: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckConfig {
    pub antisymmetry_points: usize,
    /// `(nu, sigma)` pairs of the full-space moment check.
    pub moment_pairs: Vec<(f64, f64)>,
    /// Viscosities at which `M2` must agree.
    pub m2_nus: Vec<f64>,
    pub m2_horizon: f64,
    pub degeneracy_nus: Vec<f64>,
    pub degeneracy_t: f64,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        Self {
            antisymmetry_points: 1000,
            moment_pairs: vec![(0.1, 1.0), (1e-2, 0.5), (1e-3, 2.0)],
            m2_nus: vec![1e-1, 1e-2, 1e-3],
            m2_horizon: 0.5,
            degeneracy_nus: vec![1e-1, 1e-2, 1e-3, 1e-4],
            degeneracy_t: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub nus: Vec<f64>,
    /// Mollifier schedule; `eps = nu` when absent.
    pub epss: Option<Vec<f64>>,
    /// Fixed horizon; when absent the horizon is `horizon_fraction` times the
    /// measured contraction horizon of the `iteration` section.
    pub horizon: Option<f64>,
    pub horizon_fraction: f64,
    pub nsteps_time: usize,
    pub time_ratio: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            nus: vec![1e-1, 5e-2, 2.5e-2],
            epss: None,
            horizon: None,
            horizon_fraction: 0.5,
            nsteps_time: 32,
            time_ratio: 1.1,
        }
    }
}

impl LimitConfig {
    pub fn eps_schedule(&self) -> Vec<f64> {
        self.epss.clone().unwrap_or_else(|| self.nus.clone())
    }
}

/// Which iterates `iterate` writes as field dumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointMode {
    /// Every iterate at every time node.
    All,
    /// Every iterate at the final time node.
    LastNode,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Descending slab radii; empty means 8, 4, 2 and 1 grid cells.
    pub slab_radii: Vec<f64>,
    /// Grids of the residual trend, coarsest first.
    pub residual_grids: Vec<usize>,
    pub residual_probes: usize,
    /// Probes stay this many cells of the coarsest residual grid away from
    /// `x1 = 0`.
    pub residual_min_cells: f64,
    /// Decay order `2m` of the certificates; `m` is also the compactified
    /// derivative order.
    pub decay_m: u32,
    /// Dyadic levels of the Hölder exponent estimate.
    pub holder_levels: u32,
    pub checkpoints: CheckpointMode,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            slab_radii: vec![],
            residual_grids: vec![48, 64, 96],
            residual_probes: 16,
            residual_min_cells: 5.0,
            decay_m: 1,
            holder_levels: 4,
            checkpoints: CheckpointMode::LastNode,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.iteration.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let l = &self.limit;
        if l.nus.is_empty() {
            return bad("limit.nus must not be empty");
        }
        if l.eps_schedule().len() != l.nus.len() {
            return bad("limit.epss must match limit.nus in length");
        }
        if l.horizon.is_some_and(|t| !(t > 0.0)) {
            return bad("limit.horizon must be positive");
        }
        if !(l.horizon_fraction > 0.0 && l.horizon_fraction <= 1.0) {
            return bad("limit.horizon_fraction must lie in (0, 1]");
        }
        let d = &self.diagnostics;
        if d.residual_grids.windows(2).any(|w| w[1] <= w[0]) {
            return bad("diagnostics.residual_grids must ascend");
        }
        if d.decay_m > 2 {
            return bad("diagnostics.decay_m must be at most 2");
        }
        if self.kernel.degeneracy_t <= 0.0 || self.kernel.m2_horizon <= 0.0 {
            return bad("kernel times must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.limit.epss = Some(vec![0.2, 0.1, 0.05]);
        c.limit.horizon = Some(0.3);
        c.diagnostics.checkpoints = CheckpointMode::All;
        c.iteration.nu = 0.037;
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("colour = 3").is_err());
        assert!(RunConfig::parse("[iteration]\nviscosity = 0.1").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::parse("[iteration]\ngrid_n = 32\n[iteration.params]\nalpha0 = 0.3\nbeta0 = 1.7\nfamily = \"radial\"").unwrap();
        assert_eq!(c.iteration.grid_n, 32);
        assert_eq!(c.iteration.kmax, RunConfig::default().iteration.kmax);
        assert_eq!(c.iteration.params.family, rev_euler::Family::Radial);
    }

    #[test]
    fn default_validates() {
        RunConfig::default().validate().unwrap();
    }
}
