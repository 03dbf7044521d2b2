//! Experiment configuration: named presets plus TOML overrides.
//!
//! A config file is merged key by key over the preset it names (or the one
//! given with `--preset`), so it only needs the fields it changes. The fully
//! resolved config is echoed next to the outputs and reproduces the run.

use std::fmt;
use std::path::{Path, PathBuf};

use fredholm::reconstruct::GridSpec;
use fredholm::sde::{InitSpec, SimConfig, StoppingRule};
use fredholm::{ReferenceMeasure, Regularization};
use serde::{Deserialize, Serialize};

/// Any problem with the configuration itself; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Toy,
    ToyReferenceSweep,
    ToyLambdaSweep,
    KlExpansion,
    GpSsm,
    #[serde(rename = "rate-N")]
    RateN,
    RateGamma,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Toy,
        Preset::ToyReferenceSweep,
        Preset::ToyLambdaSweep,
        Preset::KlExpansion,
        Preset::GpSsm,
        Preset::RateN,
        Preset::RateGamma,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::ToyReferenceSweep => "toy-reference-sweep",
            Preset::ToyLambdaSweep => "toy-lambda-sweep",
            Preset::KlExpansion => "kl-expansion",
            Preset::GpSsm => "gp-ssm",
            Preset::RateN => "rate-N",
            Preset::RateGamma => "rate-gamma",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> anyhow::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                config_err(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Gaussian toy equation with known solution `N(0, 1)`.
    GaussianToy { lambda: f64, beta: f64 },
    /// Homogeneous equation with `k(x, y) = exp(-|y - x|)`, `λ = 1/μ`.
    Exponential,
    /// Constant kernel `k ≡ 1` on `[-1, 1]`; a sanity case for the baseline.
    Unit,
    /// GP state-space model fitted to seeded or file-provided training data.
    GpSsm {
        training_points: usize,
        noise_sd: f64,
        length_scale_sq: f64,
        signal_var: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        training_csv: Option<PathBuf>,
        /// Samples drawn from the reconstruction for the invariance check.
        invariance_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitConfig {
    Gaussian { mean: f64, var: f64 },
    Uniform { lower: f64, upper: f64 },
    Samples { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Gaussian { mean: f64, var: f64 },
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    pub window: usize,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_particles: usize,
    pub step: f64,
    pub horizon: u64,
    pub snapshot_every: u64,
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    pub alpha: f64,
    pub eta: f64,
    pub reference: ReferenceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    Alpha,
    NParticles,
    Step,
    ReferenceVar,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Alpha => "alpha",
            SweepParameter::NParticles => "n_particles",
            SweepParameter::Step => "step",
            SweepParameter::ReferenceVar => "reference_var",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Preset,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Rescale the plug-in reconstruction to unit mass before metrics
    /// (diagnostic only; the homogeneous problems are always rescaled).
    #[serde(default)]
    pub renormalize: bool,
    pub problem: ProblemConfig,
    pub sim: SimSection,
    pub regularization: RegularizationSection,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn toy_grid() -> GridSection {
    let g = GridSpec::toy_default();
    GridSection {
        lower: g.lower(),
        upper: g.upper(),
        points: g.len(),
    }
}

fn normal(var: f64) -> ReferenceConfig {
    ReferenceConfig::Gaussian { mean: 0.0, var }
}

fn toy_base(experiment: Preset) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        seeds: vec![0],
        output_dir: PathBuf::from("out"),
        renormalize: false,
        problem: ProblemConfig::GaussianToy {
            lambda: 0.5,
            beta: 0.5,
        },
        sim: SimSection {
            n_particles: 100,
            step: 1e-2,
            horizon: 200,
            snapshot_every: 10,
            init: InitConfig::Gaussian {
                mean: 0.0,
                var: 0.01,
            },
            stopping: None,
        },
        regularization: RegularizationSection {
            alpha: 0.01,
            eta: 0.0,
            reference: normal(1.0),
        },
        grid: toy_grid(),
        baseline: None,
        sweep: None,
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let seeds10: Vec<u64> = (0..10).collect();
        match preset {
            Preset::Toy | Preset::Custom => toy_base(preset),
            Preset::ToyReferenceSweep => ExperimentConfig {
                seeds: seeds10,
                sweep: Some(SweepSection {
                    parameter: SweepParameter::Alpha,
                    values: vec![0.0, 0.01, 0.1, 0.25, 0.5, 1.0],
                }),
                ..toy_base(preset)
            },
            Preset::ToyLambdaSweep => ExperimentConfig {
                seeds: seeds10,
                sweep: Some(SweepSection {
                    parameter: SweepParameter::Lambda,
                    values: (1..10).map(|i| i as f64 / 10.0).collect(),
                }),
                ..toy_base(preset)
            },
            Preset::RateN | Preset::RateGamma => {
                let mut c = toy_base(preset);
                c.seeds = seeds10;
                c.regularization.alpha = 0.1;
                c.sweep = Some(if preset == Preset::RateN {
                    SweepSection {
                        parameter: SweepParameter::NParticles,
                        values: vec![50.0, 100.0, 200.0, 500.0, 1000.0],
                    }
                } else {
                    c.sim.n_particles = 500;
                    SweepSection {
                        parameter: SweepParameter::Step,
                        values: vec![1e-3, 2e-3, 5e-3, 1e-2],
                    }
                });
                c
            }
            Preset::KlExpansion => ExperimentConfig {
                experiment: preset,
                seeds: vec![0],
                output_dir: PathBuf::from("out"),
                renormalize: true,
                problem: ProblemConfig::Exponential,
                sim: SimSection {
                    n_particles: 500,
                    step: 1.0 / 500.0,
                    horizon: 400,
                    snapshot_every: 10,
                    init: InitConfig::Gaussian {
                        mean: 0.0,
                        var: 0.05 * 0.05,
                    },
                    stopping: None,
                },
                regularization: RegularizationSection {
                    alpha: 1e-2,
                    eta: 0.0,
                    reference: normal(0.05 * 0.05),
                },
                grid: GridSection {
                    lower: -1.0,
                    upper: 1.0,
                    points: 801,
                },
                baseline: Some(BaselineSection {
                    lower: -1.0,
                    upper: 1.0,
                    nodes: 500,
                }),
                sweep: None,
            },
            Preset::GpSsm => {
                let g = GridSpec::gp_ssm_default();
                ExperimentConfig {
                    experiment: preset,
                    seeds: vec![0],
                    output_dir: PathBuf::from("out"),
                    renormalize: false,
                    problem: ProblemConfig::GpSsm {
                        training_points: 20,
                        noise_sd: 5.0,
                        length_scale_sq: 3.59 * 3.59,
                        signal_var: 4.21 * 4.21,
                        training_csv: None,
                        invariance_samples: 20_000,
                    },
                    sim: SimSection {
                        n_particles: 200,
                        step: 1.0 / 200.0,
                        horizon: 100,
                        snapshot_every: 10,
                        init: InitConfig::Gaussian {
                            mean: 0.0,
                            var: 1.0,
                        },
                        stopping: None,
                    },
                    regularization: RegularizationSection {
                        alpha: 1e-3,
                        eta: 0.0,
                        reference: normal(1.0),
                    },
                    grid: GridSection {
                        lower: g.lower(),
                        upper: g.upper(),
                        points: g.len(),
                    },
                    baseline: Some(BaselineSection {
                        lower: -20.0,
                        upper: 10.0,
                        nodes: 500,
                    }),
                    sweep: None,
                }
            }
        }
    }

    /// Resolves the preset, then merges the file (if any) over it. A file
    /// may name its own preset with `experiment = "..."`; `--preset` wins.
    pub fn load(preset: Option<Preset>, file: Option<&Path>) -> anyhow::Result<Self> {
        let overrides = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    config_err(format!("cannot read config {}: {e}", path.display()))
                })?;
                let value: toml::Table = toml::from_str(&text)
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                Some(value)
            }
            None => None,
        };
        let from_file = match overrides.as_ref().and_then(|t| t.get("experiment")) {
            Some(toml::Value::String(s)) => Some(Preset::parse(s)?),
            Some(other) => return Err(config_err(format!("experiment must be a string, got {other}"))),
            None => None,
        };
        let base_preset = preset.or(from_file).unwrap_or(Preset::Toy);
        let mut merged = toml::Table::try_from(Self::preset(base_preset))
            .map_err(|e| config_err(e.to_string()))?;
        if let Some(mut over) = overrides {
            // An explicit preset overrides whatever the file names.
            over.remove("experiment");
            merge(&mut merged, over);
        }
        let config: ExperimentConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds must not be empty"));
        }
        if let InitConfig::Samples { path } = &self.sim.init {
            if !path.exists() {
                return Err(config_err(format!("init samples file {} not found", path.display())));
            }
        }
        if let ProblemConfig::GpSsm {
            training_csv: Some(path),
            ..
        } = &self.problem
        {
            if !path.exists() {
                return Err(config_err(format!("training data file {} not found", path.display())));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config_err("sweep values must not be empty"));
            }
        }
        GridSpec::new(self.grid.lower, self.grid.upper, self.grid.points)
            .map_err(|e| config_err(e.to_string()))?;
        for variant in self.variants() {
            variant
                .config
                .sim_config(self.seeds[0])
                .validate()
                .map_err(|e| config_err(e.to_string()))?;
            let r = &variant.config.regularization;
            if !(r.alpha >= 0.0 && r.eta >= 0.0) {
                return Err(config_err("alpha and eta must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Experiment label used in summaries, e.g. `toy-lambda-sweep/lambda=0.3`.
    pub fn label(&self) -> String {
        self.experiment.name().to_string()
    }

    /// One config per sweep value (or just `self`), each with its label.
    pub fn variants(&self) -> Vec<Variant> {
        let Some(sweep) = &self.sweep else {
            return vec![Variant {
                label: self.label(),
                dir: "base".to_string(),
                config: ExperimentConfig {
                    sweep: None,
                    ..self.clone()
                },
            }];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = ExperimentConfig {
                    sweep: None,
                    ..self.clone()
                };
                match sweep.parameter {
                    SweepParameter::Lambda => {
                        // Other problems fix λ themselves; the label still records it.
                        if let ProblemConfig::GaussianToy { lambda, .. } = &mut c.problem {
                            *lambda = v;
                        }
                    }
                    SweepParameter::Alpha => c.regularization.alpha = v,
                    SweepParameter::NParticles => c.sim.n_particles = v as usize,
                    SweepParameter::Step => c.sim.step = v,
                    SweepParameter::ReferenceVar => {
                        if let ReferenceConfig::Gaussian { var, .. } = &mut c.regularization.reference {
                            *var = v;
                        }
                    }
                }
                let tag = format!("{}={v}", sweep.parameter.key());
                Variant {
                    label: format!("{}/{tag}", self.label()),
                    dir: tag,
                    config: c,
                }
            })
            .collect()
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let init = match &self.sim.init {
            InitConfig::Gaussian { mean, var } => InitSpec::Gaussian {
                mean: *mean,
                var: *var,
            },
            InitConfig::Uniform { lower, upper } => InitSpec::Uniform {
                lower: *lower,
                upper: *upper,
            },
            InitConfig::Samples { path } => InitSpec::Samples(path.clone()),
        };
        let mut sim = SimConfig::new(self.sim.n_particles, self.sim.step, self.sim.horizon, seed, init);
        sim.snapshot_every = self.sim.snapshot_every;
        sim.stopping = self.sim.stopping.as_ref().map(|s| StoppingRule {
            window: s.window,
            rel_tol: s.rel_tol,
        });
        sim
    }

    pub fn regularization(&self) -> Regularization {
        let r = &self.regularization;
        let reference = match r.reference {
            ReferenceConfig::Gaussian { mean, var } => ReferenceMeasure::Gaussian { mean, var },
            ReferenceConfig::Flat => ReferenceMeasure::Flat,
        };
        Regularization::new(r.alpha, r.eta, reference)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.grid.lower, self.grid.upper, self.grid.points)
            .expect("validated on load")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One point of a sweep.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    /// Directory name under the output root.
    pub dir: String,
    pub config: ExperimentConfig,
}

/// Recursive table merge; scalars and arrays in `over` replace those in `base`.
/// A table that switches `kind` replaces the old table wholesale so fields
/// of the previous variant do not leak in.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if o.get("kind").is_none() || o.get("kind") == b.get("kind") =>
            {
                merge(b, o)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for p in Preset::ALL {
            let c = ExperimentConfig::preset(p);
            c.validate().unwrap();
            let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(back, c, "{}", p.name());
        }
    }

    #[test]
    fn file_overrides_merge_over_preset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "experiment = \"gp-ssm\"\nseeds = [3, 4]\n[sim]\nhorizon = 7\n[problem]\nnoise_sd = 2.0\n",
        )
        .unwrap();
        let c = ExperimentConfig::load(None, Some(&path)).unwrap();
        assert_eq!(c.experiment, Preset::GpSsm);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.sim.horizon, 7);
        assert_eq!(c.sim.n_particles, 200);
        assert!(matches!(c.problem, ProblemConfig::GpSsm { noise_sd, .. } if noise_sd == 2.0));

        // --preset wins over the file's `experiment`; gp-ssm problem keys then
        // no longer fit the toy problem table.
        assert!(ExperimentConfig::load(Some(Preset::Toy), Some(&path)).is_err());
        std::fs::write(&path, "experiment = \"gp-ssm\"\n[sim]\nhorizon = 7\n").unwrap();
        let c = ExperimentConfig::load(Some(Preset::Toy), Some(&path)).unwrap();
        assert_eq!(c.experiment, Preset::Toy);
        assert_eq!(c.sim.horizon, 7);
    }

    #[test]
    fn switching_kind_replaces_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[sim.init]\nkind = \"uniform\"\nlower = -1.0\nupper = 1.0\n").unwrap();
        let c = ExperimentConfig::load(Some(Preset::Toy), Some(&path)).unwrap();
        assert_eq!(
            c.sim.init,
            InitConfig::Uniform {
                lower: -1.0,
                upper: 1.0
            }
        );
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        for text in [
            "seeds = []",
            "[sim]\nstep = -1.0",
            "[sim]\nbogus = 1",
            "experiment = \"nope\"",
            "this is not toml",
        ] {
            std::fs::write(&path, text).unwrap();
            let err = ExperimentConfig::load(None, Some(&path)).unwrap_err();
            assert!(err.downcast_ref::<ConfigError>().is_some(), "{text}: {err}");
        }
    }

    #[test]
    fn sweep_variants_carry_key_value_labels() {
        let c = ExperimentConfig::preset(Preset::ToyLambdaSweep);
        let v = c.variants();
        assert_eq!(v.len(), 9);
        assert_eq!(v[2].label, "toy-lambda-sweep/lambda=0.3");
        assert!(matches!(v[2].config.problem, ProblemConfig::GaussianToy { lambda, .. } if lambda == 0.3));
        let r = ExperimentConfig::preset(Preset::RateN).variants();
        assert_eq!(r[4].config.sim.n_particles, 1000);
        assert_eq!(r[4].label, "rate-N/n_particles=1000");
    }
}
