//! Experiment configuration: a flat TOML file, one key per setting.
//!
//! Relative paths (`coefficients`, `output_dir`) are resolved against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tentlab::ensemble::{TimeProfile, DEFAULT_BUMP};
use tentlab::grid::io::load_coefficients;
use tentlab::grid::GridSpec;
use tentlab::maxreg::MlScheme;
use tentlab::probes::{ProbeParams, ProbeSetup, ProviderSpec, MAX_PROBE_P, PROBE_NAMES};
use tentlab::semigroup::DIVFORM_MAX_POINTS;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub probe: Option<String>,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scheme: Option<String>,

    pub n: usize,
    pub extent: f64,
    pub nx: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,

    pub provider: String,
    /// Coefficient field (CSV, one time slice) for `divform`.
    pub coefficients: Option<PathBuf>,

    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    pub m: Option<u32>,
    pub ensemble_size: usize,
    /// Defaults to `nx / 8`.
    pub cutoff: Option<usize>,
    /// `"bump"` (default) or `"ramp"`.
    pub profile: Option<String>,
    pub bump_from: Option<f64>,
    pub bump_to: Option<f64>,
    #[serde(default = "default_true")]
    pub check_stability: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("reports")
}

fn default_true() -> bool {
    true
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub probe: Option<String>,
    pub setup: ProbeSetup,
    pub params: ProbeParams,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    fn grid(&self) -> GridSpec {
        GridSpec::new(
            self.n,
            self.extent,
            self.nx,
            self.t_min,
            self.t_max,
            self.nt,
        )
    }

    fn homogeneity(&self) -> u32 {
        match self.provider.as_str() {
            "poisson" => 1,
            _ => 2,
        }
    }

    /// Checks every key against the preconditions of the requested probe and
    /// resolves files. `base` is the directory of the config file.
    pub fn validate(&self, base: &Path) -> Result<Experiment> {
        if let Some(&beta) = self.beta.iter().find(|b| !(**b < 1.0)) {
            bail!("key `beta`: beta = {beta} violates the requirement beta < 1");
        }
        if let Some(probe) = &self.probe {
            if !PROBE_NAMES.contains(&probe.as_str()) {
                bail!(
                    "key `probe`: unknown probe '{probe}' (expected one of {})",
                    PROBE_NAMES.join(", ")
                );
            }
        }
        let grid = self.grid();
        grid.validate()
            .context("keys `n`, `extent`, `nx`, `t_min`, `t_max`, `nt`")?;
        if let Some(&p) = self.p.iter().find(|p| !(**p > 1.0 && **p <= MAX_PROBE_P)) {
            bail!("key `p`: p = {p} must lie in (1, {MAX_PROBE_P}]");
        }
        if let Some(&a) = self.alpha.iter().find(|a| !(1.0..=16.0).contains(*a)) {
            bail!("key `alpha`: alpha = {a} must lie in [1, 16]");
        }
        if self.ensemble_size == 0 {
            bail!("key `ensemble_size`: must be at least 1");
        }
        let m = self.m.unwrap_or(self.homogeneity());
        if m == 0 {
            bail!("key `m`: must be a positive integer");
        }
        if self.probe.as_deref() == Some("boundedness") && m != self.homogeneity() {
            bail!(
                "key `m`: the {} provider has homogeneity {}, not {m}",
                self.provider,
                self.homogeneity()
            );
        }
        let scheme: MlScheme = match &self.scheme {
            Some(name) => name
                .parse()
                .map_err(|e| anyhow::anyhow!("key `scheme`: {e}"))?,
            None => MlScheme::SingularitySplit,
        };
        let profile = match self.profile.as_deref() {
            None | Some("bump") => TimeProfile::Bump {
                from: self.bump_from.unwrap_or(DEFAULT_BUMP.0),
                to: self.bump_to.unwrap_or(DEFAULT_BUMP.1),
            },
            Some("ramp") => {
                if self.bump_from.is_some() || self.bump_to.is_some() {
                    bail!("keys `bump_from`/`bump_to` only apply to profile = \"bump\"");
                }
                TimeProfile::Ramp
            }
            Some(other) => {
                bail!("key `profile`: unknown time profile '{other}' (expected bump or ramp)")
            }
        };
        let cutoff = self.cutoff.unwrap_or((self.nx / 8).max(1));
        if cutoff == 0 || 2 * cutoff >= self.nx {
            bail!(
                "key `cutoff`: mode cutoff {cutoff} must lie in [1, nx/2) with nx = {}",
                self.nx
            );
        }

        let provider = match self.provider.as_str() {
            "heat" | "poisson" => {
                if self.coefficients.is_some() {
                    bail!("key `coefficients`: only the divform provider takes a coefficient file");
                }
                if self.provider == "heat" {
                    ProviderSpec::Heat
                } else {
                    ProviderSpec::Poisson
                }
            }
            "divform" => self.divform(base, &grid)?,
            other => bail!(
                "key `provider`: unknown provider '{other}' (expected heat, poisson or divform)"
            ),
        };

        // Radius limits for the grids that will actually be built.
        let finest = if self.check_stability {
            grid.refined()
        } else {
            grid
        };
        if let ProviderSpec::DivForm { .. } = provider {
            let points = finest.npts();
            if points > DIVFORM_MAX_POINTS {
                bail!(
                    "keys `nx`/`check_stability`: divform needs at most {DIVFORM_MAX_POINTS} spatial points, \
                     the {} grid has {points}",
                    if self.check_stability { "refined" } else { "configured" }
                );
            }
        }
        let limit = self.extent / 2.0;
        let radius = self.t_max.powf(1.0 / m as f64);
        let needs_cones = matches!(
            self.probe.as_deref(),
            Some("aperture" | "boundedness" | "carleson")
        );
        if needs_cones {
            let widest = if self.probe.as_deref() == Some("aperture") {
                self.alpha.iter().copied().fold(1.0, f64::max)
            } else {
                1.0
            };
            if widest * radius >= limit {
                bail!(
                    "keys `t_max`/`alpha`/`extent`: cone radius {:.6} at t_max exceeds half the torus side {limit}",
                    widest * radius
                );
            }
        }

        let output_dir = if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            base.join(&self.output_dir)
        };
        Ok(Experiment {
            probe: self.probe.clone(),
            setup: ProbeSetup {
                grid,
                provider,
                scheme,
                seed: self.seed,
                ensemble_size: self.ensemble_size,
                cutoff,
                profile,
                check_stability: self.check_stability,
            },
            params: ProbeParams {
                p: self.p.clone(),
                beta: self.beta.clone(),
                alpha: self.alpha.clone(),
                m: self.m,
            },
            output_dir,
        })
    }

    fn divform(&self, base: &Path, grid: &GridSpec) -> Result<ProviderSpec> {
        let Some(file) = &self.coefficients else {
            bail!("key `coefficients`: the divform provider needs a coefficient file");
        };
        let path = if file.is_absolute() {
            file.clone()
        } else {
            base.join(file)
        };
        if !path.exists() {
            bail!("key `coefficients`: file not found: {}", path.display());
        }
        let (spec, coefficients) = load_coefficients(&path)
            .with_context(|| format!("key `coefficients`: cannot load {}", path.display()))?;
        if spec.n != grid.n || spec.extent != grid.extent || grid.nx % spec.nx != 0 {
            bail!(
                "key `coefficients`: field on n = {}, extent = {}, nx = {} does not fit the grid \
                 (n = {}, extent = {}, nx = {}); nx must be a multiple of the coefficient resolution",
                spec.n,
                spec.extent,
                spec.nx,
                grid.n,
                grid.extent,
                grid.nx
            );
        }
        Ok(ProviderSpec::DivForm {
            source: path.display().to_string(),
            base_nx: spec.nx,
            coefficients,
        })
    }
}
