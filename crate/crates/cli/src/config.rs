//! Run configuration: structured text with explicit units in the key names.
//!
//! Every physical quantity carries its unit in the key (`sigma_max_mpa`,
//! `thickness_m`, `load_n`); conversion to SI happens in exactly one place,
//! the typed accessors. A config validates fully before any compute starts,
//! and its canonical serialization doubles as the provenance hash input.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trellis_core::fem::{Material, SimpLaw};
use trellis_core::mesh::{ComponentSet, ElementOrder};
use trellis_core::optimizer::SolverConfig;
use trellis_core::training::TrainingConfig;

/// Which ground structure to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LBracket,
    Cantilever,
    Custom,
}

/// A user-drawn layout: grid text plus supports and loads given as
/// `"ix iy EDGE"` and `"ix iy EDGE fx fy"` lines (edges B, R, T, L).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomProblem {
    pub grid: String,
    pub dirichlet: Vec<String>,
    pub loads_n: Vec<String>,
}

/// Interior-point settings exposed to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub step_cap: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSettings {
            tol: d.tol,
            max_iter: d.max_iter,
            mu_init: d.mu_init,
            step_cap: d.step_cap,
        }
    }
}

impl SolverSettings {
    pub fn to_core(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            mu_init: self.mu_init,
            step_cap: self.step_cap,
            ..SolverConfig::default()
        }
    }
}

/// Everything one run needs, desk-scale defaults throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// Side length of the L-bracket bounding square, in components.
    pub l_bracket_scale: usize,
    pub cantilever_scale_x: usize,
    pub cantilever_scale_y: usize,
    pub custom: CustomProblem,

    pub youngs_modulus_gpa: f64,
    pub poisson_ratio: f64,
    pub thickness_m: f64,
    pub cell_size_m: f64,
    /// 1 = linear triangles, 2 = quadratic.
    pub element_order: u32,
    /// Port refinement; a component meshes as a 3b x 3b grid.
    pub resolution: usize,

    /// Total applied force magnitude; 0 picks the problem's textbook value.
    pub load_n: f64,
    /// Multiplier on `load_n`; 0 calibrates it from a probe solve so the
    /// solid design sits at 40% of the optimization bound.
    pub load_scale: f64,

    pub sigma_max_mpa: f64,
    /// Optimization bound; 0 means equal to `sigma_max_mpa`.
    pub sigma_hat_mpa: f64,
    pub simp_rho_min: f64,
    pub ks_p: f64,
    pub n_agg: usize,
    pub seed: u64,

    pub energy_fraction: f64,
    pub training_snapshots: usize,
    pub training_eta: f64,

    /// Densities at or below this are removed during extraction.
    pub drop_tolerance: f64,
    pub solver: SolverSettings,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::LBracket,
            l_bracket_scale: 8,
            cantilever_scale_x: 16,
            cantilever_scale_y: 4,
            custom: CustomProblem::default(),
            youngs_modulus_gpa: 113.8,
            poisson_ratio: 0.34,
            thickness_m: 0.05,
            cell_size_m: 0.0625,
            element_order: 2,
            resolution: 1,
            load_n: 0.0,
            load_scale: 0.0,
            sigma_max_mpa: 880.0,
            sigma_hat_mpa: 0.0,
            simp_rho_min: 1e-3,
            ks_p: 15.0,
            n_agg: 10,
            seed: 2024,
            energy_fraction: 0.999,
            training_snapshots: 100,
            training_eta: 10.0,
            drop_tolerance: 0.2,
            solver: SolverSettings::default(),
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a TOML config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects anything that would fail mid-run: every physical quantity
    /// must be positive and every discrete choice in range.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive and finite, got {v}");
            }
            Ok(())
        }
        positive("youngs_modulus_gpa", self.youngs_modulus_gpa)?;
        positive("thickness_m", self.thickness_m)?;
        positive("cell_size_m", self.cell_size_m)?;
        positive("sigma_max_mpa", self.sigma_max_mpa)?;
        positive("ks_p", self.ks_p)?;
        positive("training_eta", self.training_eta)?;
        if !(-1.0 < self.poisson_ratio && self.poisson_ratio < 0.5) {
            bail!(
                "poisson_ratio must lie in (-1, 0.5), got {}",
                self.poisson_ratio
            );
        }
        if self.element_order != 1 && self.element_order != 2 {
            bail!("element_order must be 1 or 2, got {}", self.element_order);
        }
        if self.resolution == 0 {
            bail!("resolution must be at least 1");
        }
        if self.load_n < 0.0 || !self.load_n.is_finite() {
            bail!("load_n must be nonnegative, got {}", self.load_n);
        }
        if self.load_scale < 0.0 || !self.load_scale.is_finite() {
            bail!("load_scale must be nonnegative, got {}", self.load_scale);
        }
        if self.sigma_hat_mpa < 0.0 || self.sigma_hat_mpa > self.sigma_max_mpa {
            bail!(
                "sigma_hat_mpa must lie in (0, sigma_max_mpa] or be 0 for equal, got {}",
                self.sigma_hat_mpa
            );
        }
        if !(0.0 < self.simp_rho_min && self.simp_rho_min < 1.0) {
            bail!("simp_rho_min must lie in (0, 1), got {}", self.simp_rho_min);
        }
        if self.n_agg == 0 {
            bail!("n_agg must be at least 1");
        }
        if !(0.0 < self.energy_fraction && self.energy_fraction <= 1.0) {
            bail!(
                "energy_fraction must lie in (0, 1], got {}",
                self.energy_fraction
            );
        }
        if self.training_snapshots == 0 {
            bail!("training_snapshots must be at least 1");
        }
        if !(0.0..1.0).contains(&self.drop_tolerance) {
            bail!(
                "drop_tolerance must lie in [0, 1), got {}",
                self.drop_tolerance
            );
        }
        positive("solver.tol", self.solver.tol)?;
        positive("solver.mu_init", self.solver.mu_init)?;
        positive("solver.step_cap", self.solver.step_cap)?;
        if self.solver.max_iter == 0 {
            bail!("solver.max_iter must be at least 1");
        }
        if self.output_dir.is_empty() {
            bail!("output_dir must not be empty");
        }
        match self.problem {
            ProblemKind::LBracket => {
                if self.l_bracket_scale < 2 {
                    bail!(
                        "l_bracket_scale must be at least 2 to form an L, got {}",
                        self.l_bracket_scale
                    );
                }
            }
            ProblemKind::Cantilever => {
                if self.cantilever_scale_y < 2 || self.cantilever_scale_x < self.cantilever_scale_y
                {
                    bail!(
                        "cantilever needs scale_x >= scale_y >= 2, got {} x {}",
                        self.cantilever_scale_x,
                        self.cantilever_scale_y
                    );
                }
            }
            ProblemKind::Custom => {
                if self.custom.grid.trim().is_empty() {
                    bail!("custom problem needs a non-empty grid");
                }
            }
        }
        Ok(())
    }

    pub fn material(&self) -> Result<Material> {
        Ok(Material::new(
            self.youngs_modulus_gpa * 1e9,
            self.poisson_ratio,
        )?)
    }

    pub fn element_order(&self) -> ElementOrder {
        match self.element_order {
            1 => ElementOrder::Linear,
            _ => ElementOrder::Quadratic,
        }
    }

    pub fn component_set(&self) -> Result<ComponentSet> {
        Ok(ComponentSet::build(
            self.element_order(),
            self.resolution,
            self.cell_size_m,
            self.thickness_m,
        )?)
    }

    pub fn sigma_max_pa(&self) -> f64 {
        self.sigma_max_mpa * 1e6
    }

    pub fn sigma_hat_pa(&self) -> f64 {
        if self.sigma_hat_mpa > 0.0 {
            self.sigma_hat_mpa * 1e6
        } else {
            self.sigma_max_pa()
        }
    }

    /// Total applied force before scaling; the textbook magnitude per
    /// problem when unset.
    pub fn total_load_n(&self) -> f64 {
        if self.load_n > 0.0 {
            return self.load_n;
        }
        match self.problem {
            ProblemKind::LBracket => 67_500.0,
            ProblemKind::Cantilever => 30_000.0,
            ProblemKind::Custom => 1.0,
        }
    }

    pub fn simp(&self) -> SimpLaw {
        SimpLaw {
            rho_min: self.simp_rho_min,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            n_snapshots: self.training_snapshots,
            eta: self.training_eta,
            seed: self.seed,
            energy_fraction: self.energy_fraction,
        }
    }

    /// Canonical serialization: the provenance hash input and the resolved
    /// config echo are the same bytes, so a re-run from the echo hashes
    /// identically.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.problem = ProblemKind::Cantilever;
        cfg.ks_p = 12.5;
        cfg.seed = 77;
        let text = cfg.canonical_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("sigma_max = 880.0").unwrap_err();
        assert!(err.to_string().contains("sigma_max"));
    }

    #[test]
    fn nonpositive_quantities_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.sigma_max_mpa = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.thickness_m = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.sigma_hat_mpa = cfg.sigma_max_mpa * 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn degenerate_problem_scales_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.l_bracket_scale = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.problem = ProblemKind::Cantilever;
        cfg.cantilever_scale_x = 2;
        cfg.cantilever_scale_y = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unit_suffixed_keys_convert_to_si() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.sigma_max_pa(), 8.8e8);
        assert_eq!(cfg.material().unwrap().youngs, 113.8e9);
        assert_eq!(cfg.total_load_n(), 67_500.0);
    }
}
