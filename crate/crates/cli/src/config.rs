//! Run configuration: a single versioned JSON document. Unknown keys are
//! errors; every numeric knob is validated before any compute starts.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pendrot::barrier::{MinimizerOptions, SearchBox};
use pendrot::diagnostics::TubeCeilings;
use pendrot::gradientflow::RelaxOptions;
use pendrot::model::{CouplingFunction, CouplingTerm, SystemParams};
use pendrot::shadowing::{PlanPolicy, Q0Options};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub system: SystemSpec,
    pub pipeline: PipelineSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub epsilon: f64,
    pub mu: f64,
    pub coupling: CouplingSpec,
}

/// Either a catalog name or an explicit term list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    Catalog(String),
    Terms(Vec<TermSpec>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub amplitude: f64,
    pub m: i32,
    pub n: i32,
    pub p: i32,
    #[serde(default)]
    pub phase: f64,
}

impl SystemSpec {
    pub fn coupling(&self) -> Result<CouplingFunction> {
        match &self.coupling {
            CouplingSpec::Catalog(name) => match name.as_str() {
                "arnold" => Ok(CouplingFunction::arnold()),
                "zero" => Ok(CouplingFunction::zero()),
                other => bail!("unknown coupling catalog name '{other}'"),
            },
            CouplingSpec::Terms(terms) => Ok(CouplingFunction::new(
                terms
                    .iter()
                    .map(|t| CouplingTerm::new(t.amplitude, t.m, t.n, t.p, t.phase))
                    .collect(),
            )),
        }
    }

    pub fn params(&self) -> Result<SystemParams> {
        let coupling = self.coupling()?;
        SystemParams::new(self.epsilon, self.mu, coupling)
            .map_err(|e| anyhow::anyhow!("standing assumptions violated: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PipelineSpec {
    MelnikovScan {
        omega_lo: f64,
        omega_hi: f64,
        n_omega: usize,
        n_t: usize,
        n_v: usize,
    },
    BarrierScan {
        omega_lo: f64,
        omega_hi: f64,
        n_omega: usize,
        n_t: usize,
        n_v: usize,
        #[serde(default)]
        minimizer: MinimizerOptions,
    },
    Heteroclinic {
        omega: f64,
        omega_tilde: f64,
        search_box: SearchBox,
        #[serde(default)]
        minimizer: MinimizerOptions,
    },
    ShadowRelax {
        plan: PlanSource,
        #[serde(default)]
        minimizer: MinimizerOptions,
        #[serde(default)]
        q0: Q0Options,
        #[serde(default)]
        relax: RelaxOptions,
        /// Half-widths of the per-jump heteroclinic search boxes; centers
        /// come from a coarse Melnikov scan.
        #[serde(default = "default_search_half")]
        search_half: (f64, f64),
        #[serde(default)]
        ceilings: TubeCeilings,
        #[serde(default)]
        policy: PlanPolicy,
    },
    Delta1 {
        omega: f64,
        omega_tilde: f64,
        search_box: SearchBox,
        e_levels: Vec<f64>,
        family_dim: usize,
        budget: usize,
        #[serde(default)]
        minimizer: MinimizerOptions,
    },
}

fn default_search_half() -> (f64, f64) {
    (1.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlanSource {
    Explicit {
        omegas: Vec<f64>,
        l_tilde: Vec<f64>,
        #[serde(default)]
        l: Option<f64>,
    },
    Bernoulli {
        bits: String,
        #[serde(default)]
        first_index: i64,
        omega: f64,
        l: f64,
    },
    Ramp {
        omega_minus: f64,
        omega_plus: f64,
        max_step: f64,
        spacing: f64,
    },
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).context("parsing run configuration")?;
        if config.version != CONFIG_VERSION {
            bail!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                config.version
            );
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }
}
