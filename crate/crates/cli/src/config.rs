//! Run configuration: a flat TOML document whose keys are the field names
//! below. Every key is also a `--kebab-case` flag; flags win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use voltvar::experiment::{KGrid, DEFAULT_K_MAX, DEFAULT_K_MIN, DEFAULT_N_SEEDS, DEFAULT_STEPS};
use voltvar::{model, CoeffMode, FlowModel, ScenarioSpec, Scheme};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Structured,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Prototype case 1..4 (mutually exclusive with the scenario fields).
    #[arg(long)]
    pub case: Option<u32>,

    #[arg(long)]
    pub node_count: Option<usize>,
    #[arg(long)]
    pub spacing_min: Option<f64>,
    #[arg(long)]
    pub spacing_max: Option<f64>,
    #[arg(long)]
    pub r_per_km: Option<f64>,
    #[arg(long)]
    pub x_per_km: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub p_c_max: Option<f64>,
    #[arg(long)]
    pub q_c_ratio_min: Option<f64>,
    #[arg(long)]
    pub q_c_ratio_max: Option<f64>,
    #[arg(long)]
    pub penetration: Option<f64>,
    #[arg(long)]
    pub p_g: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,

    #[arg(long)]
    pub topology_seed: Option<u64>,
    /// Load seed; ensemble member `i` uses `load_seed + i`.
    #[arg(long)]
    pub load_seed: Option<u64>,

    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub coeff_mode: Option<CoeffMode>,
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub k_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Re-sweep at 10x resolution around the coarse loss minimum.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refine: Option<bool>,

    #[arg(long)]
    pub model: Option<FlowModel>,
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

macro_rules! merge_fields {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        RunConfig { $($f: $over.$f.or($base.$f)),* }
    };
}

const SCENARIO_FIELDS: [&str; 12] = [
    "node_count",
    "spacing_min",
    "spacing_max",
    "r_per_km",
    "x_per_km",
    "v0",
    "p_c_max",
    "q_c_ratio_min",
    "q_c_ratio_max",
    "penetration",
    "p_g",
    "s",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Field-wise merge; values in `over` take precedence.
    pub fn merged(self, over: RunConfig) -> Self {
        let base = self;
        merge_fields!(base, over;
            case, node_count, spacing_min, spacing_max, r_per_km, x_per_km, v0, p_c_max,
            q_c_ratio_min, q_c_ratio_max, penetration, p_g, s, topology_seed, load_seed,
            scheme, k, coeff_mode, epsilon, k_min, k_max, steps, refine, model, n_seeds,
            output_dir, format,
        )
    }

    fn scenario_values(&self) -> [Option<f64>; 12] {
        [
            self.node_count.map(|n| n as f64),
            self.spacing_min,
            self.spacing_max,
            self.r_per_km,
            self.x_per_km,
            self.v0,
            self.p_c_max,
            self.q_c_ratio_min,
            self.q_c_ratio_max,
            self.penetration,
            self.p_g,
            self.s,
        ]
    }

    /// Either a prototype case (seeds applied) or a fully specified custom scenario.
    pub fn scenario(&self) -> Result<ScenarioSpec, CliError> {
        let values = self.scenario_values();
        let given: Vec<&str> = SCENARIO_FIELDS
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_some())
            .map(|(name, _)| *name)
            .collect();

        let mut spec = match self.case {
            Some(case) => {
                if let Some(field) = given.first() {
                    return Err(CliError::Validation(format!(
                        "give exactly one of `case` or scenario fields, found both `case` and `{field}`"
                    )));
                }
                model::case_spec(case)?
            }
            None => {
                if given.is_empty() {
                    return Err(CliError::Validation(
                        "no scenario: give `case` or every scenario field".into(),
                    ));
                }
                let need = |i: usize| {
                    values[i].ok_or_else(|| {
                        CliError::Validation(format!("missing scenario field `{}`", SCENARIO_FIELDS[i]))
                    })
                };
                ScenarioSpec {
                    node_count: self
                        .node_count
                        .ok_or_else(|| CliError::Validation("missing scenario field `node_count`".into()))?,
                    spacing_min: need(1)?,
                    spacing_max: need(2)?,
                    r_per_km: need(3)?,
                    x_per_km: need(4)?,
                    v0: need(5)?,
                    p_c_max: need(6)?,
                    q_c_ratio_min: need(7)?,
                    q_c_ratio_max: need(8)?,
                    penetration: need(9)?,
                    p_g: need(10)?,
                    s: need(11)?,
                    topology_seed: 1,
                    load_seed: 1,
                }
            }
        };
        spec.topology_seed = self.topology_seed.unwrap_or(1);
        spec.load_seed = self.load_seed.unwrap_or(1);
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<KGrid, CliError> {
        Ok(KGrid::new(
            self.k_min.unwrap_or(DEFAULT_K_MIN),
            self.k_max.unwrap_or(DEFAULT_K_MAX),
            self.steps.unwrap_or(DEFAULT_STEPS),
        )?)
    }

    pub fn n_seeds(&self) -> Result<usize, CliError> {
        match self.n_seeds {
            Some(0) => Err(CliError::Validation("n_seeds must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(DEFAULT_N_SEEDS),
        }
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        let eps = self.epsilon.unwrap_or(voltvar::control::DEFAULT_EPSILON);
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(CliError::Validation(format!("epsilon must be positive, got {eps}")))
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or_default()
    }

    pub fn model(&self) -> FlowModel {
        self.model.unwrap_or(FlowModel::Linear)
    }

    pub fn coeff_mode(&self) -> CoeffMode {
        self.coeff_mode.unwrap_or_default()
    }
}
