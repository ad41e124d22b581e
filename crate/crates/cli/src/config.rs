//! Experiment configuration (TOML).
//!
//! ```toml
//! [scene]              # optional, every key has a default
//! map_side = 128
//! noise_sigma = 0.0
//!
//! [petal]
//! zones_m = [10.0, 20.0, 32.0, 45.0]
//!
//! [search]
//! theta_per_level = [10.0, 5.0, 2.5, 2.5]
//!
//! [prior]              # optional
//! enabled = true
//!
//! [run]
//! instances = 20
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use petal_core::geometry::{build_level_luts, PetalLut};
use petal_core::matchmaker::{MatchMaker, PriorConfig};
use petal_core::search::{plan_levels, LevelPlan, SearchOptions};
use petal_core::synthworld::{SceneConfig, StreetLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scene: SceneConfig,
    pub petal: PetalSection,
    pub search: SearchSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PetalSection {
    /// Outer zone radii in meters, strictly increasing.
    pub zones_m: Vec<f64>,
    #[serde(default = "default_rows_per_zone")]
    pub rows_per_zone: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Multiscale,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub theta_per_level: Vec<f64>,
    #[serde(default = "default_n_s")]
    pub n_s: usize,
    #[serde(default = "default_n_s_prime")]
    pub n_s_prime: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_stride")]
    pub flat_stride: usize,
    #[serde(default = "default_refine")]
    pub refine_factor: usize,
    #[serde(default = "default_cs")]
    pub cs_factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub enabled: bool,
    /// Fixed prior orientation for every instance; the manifest value is used
    /// when absent.
    pub theta: Option<f64>,
    /// Prior noise bound in degrees (sets the prior width).
    pub noise_deg: f64,
    pub rho: f64,
    pub delta_scale: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            enabled: false,
            theta: None,
            noise_deg: 10.0,
            rho: 0.05,
            delta_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[serde(default)]
    pub workers: usize,
    /// Base seed added to every instance id.
    #[serde(default)]
    pub seed: u64,
    /// Instance ids; defaults to `0..instances`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_instances")]
    pub instances: u64,
}

fn default_rows_per_zone() -> usize {
    2
}
fn default_n_s() -> usize {
    4
}
fn default_n_s_prime() -> usize {
    3
}
fn default_mode() -> Mode {
    Mode::Multiscale
}
fn default_stride() -> usize {
    1
}
fn default_refine() -> usize {
    8
}
fn default_cs() -> usize {
    5
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_instances() -> u64 {
    10
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("config error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate().context("[scene]")?;
        self.plan().context("[search]")?;
        self.luts().context("[petal]")?;
        if self.ids().is_empty() {
            bail!("[run] seed list is empty");
        }
        if self.petal.rows_per_zone == 0 {
            bail!("[petal] rows_per_zone must be >= 1");
        }
        if self.search.flat_stride == 0 {
            bail!("[search] flat_stride must be >= 1");
        }
        let finest = *self.search.theta_per_level.last().expect("plan validated the list");
        let groups = self.scene.fov / finest;
        if (groups - groups.round()).abs() > 1e-9 {
            bail!("[scene] fov {} is not a multiple of the finest petal width {finest}", self.scene.fov);
        }
        self.options().context("[prior]")?;
        Ok(())
    }

    /// Instance ids in output order.
    pub fn ids(&self) -> Vec<u64> {
        match &self.run.seeds {
            Some(list) => list.clone(),
            None => (0..self.run.instances).collect(),
        }
    }

    pub fn scene_for(&self, id: u64) -> SceneConfig {
        self.scene.with_seed(self.run.seed.wrapping_add(id))
    }

    pub fn plan(&self) -> Result<LevelPlan> {
        Ok(plan_levels(
            self.scene.map_side,
            self.search.n_s,
            self.search.n_s_prime,
            &self.search.theta_per_level,
        )?)
    }

    pub fn luts(&self) -> Result<Vec<PetalLut>> {
        Ok(build_level_luts(
            &self.search.theta_per_level,
            &self.petal.zones_m,
            self.scene.ground_res,
        )?)
    }

    pub fn layout(&self) -> StreetLayout {
        StreetLayout {
            rows_per_zone: self.petal.rows_per_zone,
            cols_per_petal: self.search.cs_factor,
            fov: self.scene.fov,
        }
    }

    /// Prior for one instance, `manifest_theta` being its recorded prior.
    pub fn prior_for(&self, manifest_theta: f64) -> Option<PriorConfig> {
        let p = &self.prior;
        p.enabled.then(|| PriorConfig {
            p_theta: p.theta.unwrap_or(manifest_theta),
            delta_p: p.noise_deg,
            rho_p: p.rho,
            delta_scale: p.delta_scale,
        })
    }

    pub fn options_with(&self, prior: Option<PriorConfig>) -> Result<SearchOptions> {
        Ok(SearchOptions {
            matchmaker: MatchMaker::new(self.search.cs_factor, prior)?,
            refine_factor: self.search.refine_factor,
        })
    }

    fn options(&self) -> Result<SearchOptions> {
        self.options_with(self.prior_for(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[petal]
zones_m = [10.0, 20.0]

[search]
theta_per_level = [10.0, 5.0, 2.5, 2.5]

[run]
instances = 3
";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.ids(), vec![0, 1, 2]);
        assert_eq!(cfg.search.mode, Mode::Multiscale);
        assert_eq!(cfg.scene, SceneConfig::default());
        assert!(cfg.prior_for(12.0).is_none());
    }

    #[test]
    fn missing_field_is_named() {
        let err = ExperimentConfig::from_toml("[petal]\nzones_m=[1.0]\n[run]\n").unwrap_err();
        assert!(format!("{err:#}").contains("search"), "{err:#}");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("zones_m = [10.0, 20.0]", "")).unwrap_err();
        assert!(format!("{err:#}").contains("zones_m"), "{err:#}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
        let err = ExperimentConfig::from_toml(&format!("[scene]\nseed = 4\n{MINIMAL}")).unwrap_err();
        assert!(format!("{err:#}").contains("seed"), "{err:#}");
    }

    #[test]
    fn inconsistent_plans_are_rejected() {
        let bad = MINIMAL.replace("[10.0, 5.0, 2.5, 2.5]", "[10.0, 5.0]");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("petal widths"), "{err:#}");
        let empty = MINIMAL.replace("instances = 3", "seeds = []");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
    }

    #[test]
    fn prior_section_resolves_per_instance() {
        let text = format!("{MINIMAL}\n[prior]\nenabled = true\nnoise_deg = 5.0\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let p = cfg.prior_for(33.0).unwrap();
        assert_eq!((p.p_theta, p.delta_p, p.rho_p), (33.0, 5.0, 0.05));
    }
}
