//! Run configuration.
//!
//! A config file names a problem; every other key is optional and overrides
//! the problem's preset. Command-line overrides use `section.key=value` and
//! are applied last.
//!
//! ```toml
//! [problem]
//! name = "poisson_1way"
//!
//! [training]
//! epochs = 200
//!
//! [robin]
//! mode = "constant"
//! value = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::alm::{DualHyper, MultiplierMode, OptimizerKind, RobinMode, TrainerSettings, ROBIN_LEARNING_RATE};
use crate::ddm::{DdmSettings, ResetMode};
use crate::geometry::{
    make_cartesian_partition, make_polar_partition, sample_points, GeometryError, Partition, PolarCurve, Rect,
    SampleCounts, SubdomainPoints,
};
use crate::problems::{make_inverse_case, InverseCase, ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        origin: String,
        line: Option<usize>,
        message: String,
    },
    #[error("invalid override `{0}`, expected section.key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemName {
    #[serde(rename = "poisson_1way")]
    Poisson1Way,
    #[serde(rename = "poisson_2way")]
    Poisson2Way,
    #[serde(rename = "poisson_complex")]
    PoissonComplex,
    #[serde(rename = "helmholtz_1way")]
    Helmholtz1Way,
    #[serde(rename = "helmholtz_2way")]
    Helmholtz2Way,
    #[serde(rename = "inverse_case1")]
    InverseCase1,
    #[serde(rename = "inverse_case2")]
    InverseCase2,
    #[serde(rename = "single_domain")]
    SingleDomain,
}

impl ProblemName {
    pub const ALL: [ProblemName; 8] = [
        ProblemName::Poisson1Way,
        ProblemName::Poisson2Way,
        ProblemName::PoissonComplex,
        ProblemName::Helmholtz1Way,
        ProblemName::Helmholtz2Way,
        ProblemName::InverseCase1,
        ProblemName::InverseCase2,
        ProblemName::SingleDomain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::Poisson1Way => "poisson_1way",
            ProblemName::Poisson2Way => "poisson_2way",
            ProblemName::PoissonComplex => "poisson_complex",
            ProblemName::Helmholtz1Way => "helmholtz_1way",
            ProblemName::Helmholtz2Way => "helmholtz_2way",
            ProblemName::InverseCase1 => "inverse_case1",
            ProblemName::InverseCase2 => "inverse_case2",
            ProblemName::SingleDomain => "single_domain",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == name)
    }

    fn inverse_case(&self) -> Option<InverseCase> {
        match self {
            ProblemName::InverseCase1 => Some(InverseCase::MissingBoundary),
            ProblemName::InverseCase2 => Some(InverseCase::SparseData),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: ProblemName,
    /// Helmholtz wavenumber
    pub wavenumber: f64,
    /// measurements placed in the designated inverse subdomain
    pub n_meas: usize,
    /// standard deviation of Gaussian measurement noise
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    /// subdomains along x and y; unused by the polar problem
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub interior: usize,
    /// per boundary piece
    pub boundary: usize,
    /// per interface
    pub interface: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub outer_iterations: usize,
    pub parallel: bool,
    pub reset: ResetMode,
    pub multipliers: MultiplierMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub output: PathBuf,
    pub eval_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub partition: PartitionSection,
    pub network: NetworkSection,
    pub points: PointsSection,
    pub training: TrainingSection,
    pub optimizer: OptimizerKind,
    pub dual: DualHyper,
    pub robin: RobinMode,
    /// optimizer of the Robin parameter in adaptive mode
    pub robin_optimizer: OptimizerKind,
    pub run: RunSection,
}

impl RunConfig {
    pub fn preset(name: ProblemName) -> Self {
        let (nx, ny) = match name {
            ProblemName::Poisson1Way | ProblemName::Helmholtz1Way => (4, 1),
            ProblemName::SingleDomain => (1, 1),
            ProblemName::PoissonComplex => (1, 1),
            _ => (2, 2),
        };
        let complex = name == ProblemName::PoissonComplex;
        let (epochs, outer) = match name {
            ProblemName::PoissonComplex => (50, 30),
            ProblemName::SingleDomain => (500, 10),
            _ => (500, 30),
        };
        let n_meas = name.inverse_case().map_or(0, |c| c.default_measurements());
        RunConfig {
            problem: ProblemSection {
                name,
                wavenumber: 1.0,
                n_meas,
                noise_sigma: 0.0,
            },
            partition: PartitionSection { nx, ny },
            network: NetworkSection {
                hidden: if complex { vec![30, 30] } else { vec![20, 20, 20] },
            },
            points: if complex {
                PointsSection {
                    interior: 4096,
                    boundary: 4096,
                    interface: 4096,
                }
            } else {
                PointsSection {
                    interior: 1024,
                    boundary: 128,
                    interface: 128,
                }
            },
            training: TrainingSection {
                epochs,
                outer_iterations: outer,
                parallel: true,
                reset: ResetMode::All,
                multipliers: MultiplierMode::PerPoint,
            },
            optimizer: OptimizerKind::default(),
            dual: DualHyper::default(),
            robin: RobinMode::Adaptive,
            robin_optimizer: OptimizerKind::adam(ROBIN_LEARNING_RATE),
            run: RunSection {
                seed: 0,
                output: PathBuf::from("runs").join(name.as_str()),
                eval_resolution: 101,
            },
        }
    }

    /// Parses config text; `origin` names the source in diagnostics.
    pub fn from_toml(text: &str, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let file: Table = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut merged = Table::new();
        merge(&mut merged, file);
        for o in overrides {
            apply_override(&mut merged, o)?;
        }
        let name = merged
            .get("problem")
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .ok_or_else(|| ConfigError::Parse {
                origin: origin.to_string(),
                line: None,
                message: "missing `problem.name`".into(),
            })?;
        let name = ProblemName::parse(name).ok_or_else(|| ConfigError::Parse {
            origin: origin.to_string(),
            line: find_key_line(text, "name"),
            message: format!(
                "unknown problem `{name}`, expected one of {}",
                ProblemName::ALL.map(|p| p.as_str()).join(", ")
            ),
        })?;
        let mut table = Table::try_from(Self::preset(name)).expect("presets serialize");
        merge(&mut table, merged);
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| {
            let message = e.message().to_string();
            ConfigError::Parse {
                origin: origin.to_string(),
                line: backticked(&message).and_then(|k| find_key_line(text, k)),
                message,
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("partition.nx", self.partition.nx),
            ("partition.ny", self.partition.ny),
            ("points.interior", self.points.interior),
            ("points.boundary", self.points.boundary),
            ("points.interface", self.points.interface),
            ("training.epochs", self.training.epochs),
            ("training.outer_iterations", self.training.outer_iterations),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("`{key}` must be positive")));
            }
        }
        if self.run.eval_resolution < 2 {
            return Err(ConfigError::Invalid("`run.eval_resolution` must be at least 2".into()));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(ConfigError::Invalid(
                "`network.hidden` needs at least one layer, all widths positive".into(),
            ));
        }
        if self.problem.name.inverse_case().is_some() {
            if self.problem.n_meas == 0 {
                return Err(ConfigError::Invalid("`problem.n_meas` must be positive".into()));
            }
            if (self.partition.nx, self.partition.ny) != (2, 2) {
                return Err(ConfigError::Invalid("inverse cases use the 2x2 partition".into()));
            }
        }
        if let RobinMode::Constant { value } = self.robin {
            if !(value > 0.0 && value < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "constant Robin value {value} outside (0, 1)"
                )));
            }
        }
        let finite = [
            self.problem.wavenumber,
            self.problem.noise_sigma,
            self.dual.gamma,
            self.dual.smoothing,
            self.dual.eps,
            self.optimizer.learning_rate(),
            self.robin_optimizer.learning_rate(),
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.problem.noise_sigma < 0.0 {
            return Err(ConfigError::Invalid("non-finite or negative real parameter".into()));
        }
        Ok(())
    }

    pub fn problem_spec(&self, partition: &Partition) -> Result<ProblemSpec, ConfigError> {
        let base = match self.problem.name {
            ProblemName::Helmholtz1Way | ProblemName::Helmholtz2Way => {
                ProblemSpec::helmholtz_manufactured(self.problem.wavenumber)
            }
            _ => ProblemSpec::poisson_manufactured(),
        };
        Ok(match self.problem.name.inverse_case() {
            Some(case) => make_inverse_case(
                &base,
                case,
                partition,
                self.problem.n_meas,
                self.problem.noise_sigma,
                self.run.seed,
            )?,
            None => base,
        })
    }

    pub fn partition(&self) -> Result<Partition, ConfigError> {
        Ok(match self.problem.name {
            ProblemName::PoissonComplex => {
                make_polar_partition(PolarCurve::complex_boundary(), PolarCurve::complex_interface())?
            }
            _ => make_cartesian_partition(
                Rect::new([-1.0, -1.0], [1.0, 1.0]),
                self.partition.nx,
                self.partition.ny,
            )?,
        })
    }

    pub fn ddm_settings(&self) -> DdmSettings {
        DdmSettings {
            hidden: self.network.hidden.clone(),
            trainer: TrainerSettings {
                optimizer: self.optimizer,
                dual: self.dual,
                multipliers: self.training.multipliers,
                robin: self.robin,
                robin_optimizer: self.robin_optimizer,
            },
            epochs: self.training.epochs,
            outer_iterations: self.training.outer_iterations,
            reset: self.training.reset,
            parallel: self.training.parallel,
            seed: self.run.seed,
            eval_resolution: self.run.eval_resolution,
        }
    }

    /// Partition, problem data, collocation points and solver settings.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        self.validate()?;
        let partition = self.partition()?;
        let problem = self.problem_spec(&partition)?;
        let counts = SampleCounts {
            interior: self.points.interior,
            boundary: self.points.boundary,
            interface: self.points.interface,
        };
        let points = sample_points(&partition, counts, self.run.seed)?;
        Ok(Experiment {
            settings: self.ddm_settings(),
            problem,
            partition,
            points,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub settings: DdmSettings,
    pub problem: ProblemSpec,
    pub partition: Partition,
    pub points: Vec<SubdomainPoints>,
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => {
                // a tagged-enum section switches variant as a whole
                if t.contains_key("mode") || t.contains_key("kind") {
                    *b = t;
                } else {
                    merge(b, t);
                }
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Sets `a.b.c=value`, reading `value` as a TOML literal and falling back
/// to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_mirror_reported_setups() {
        let c = RunConfig::preset(ProblemName::Poisson1Way);
        assert_eq!(c.network.hidden, vec![20, 20, 20]);
        assert_eq!((c.points.interior, c.points.interface), (1024, 128));
        assert_eq!((c.training.epochs, c.training.outer_iterations), (500, 30));
        let c = RunConfig::preset(ProblemName::PoissonComplex);
        assert_eq!(c.network.hidden, vec![30, 30]);
        assert_eq!((c.points.interior, c.training.epochs), (4096, 50));
        assert_eq!(RunConfig::preset(ProblemName::InverseCase2).problem.n_meas, 32);
    }

    #[test]
    fn every_preset_round_trips() {
        for name in ProblemName::ALL {
            let c = RunConfig::preset(name);
            let back = RunConfig::from_toml(&c.to_toml(), "rt", &[]).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn file_and_overrides_layer_on_preset() {
        let text = "[problem]\nname = \"poisson_1way\"\n\n[training]\nepochs = 200\n";
        let c = RunConfig::from_toml(
            text,
            "t",
            &[
                "robin.mode=constant".into(),
                "robin.value=0.5".into(),
                "run.seed=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.training.epochs, 200);
        assert_eq!(c.training.outer_iterations, 30);
        assert_eq!(c.robin, RobinMode::Constant { value: 0.5 });
        assert_eq!(c.run.seed, 7);
    }

    #[test]
    fn robin_optimizer_section_replaces_preset() {
        let text = "[problem]\nname = \"poisson_1way\"\n\n[robin_optimizer]\nkind = \"sgd\"\nlearning_rate = 0.01\n";
        let c = RunConfig::from_toml(text, "t", &[]).unwrap();
        assert_eq!(c.robin_optimizer, OptimizerKind::Sgd { learning_rate: 0.01 });
        let text = "[problem]\nname = \"poisson_1way\"\n\n[robin_optimizer]\nkind = \"adam\"\nlearning_rate = 0.001\n";
        let c = RunConfig::from_toml(text, "t", &[]).unwrap();
        assert_eq!(c.robin_optimizer, OptimizerKind::adam(1e-3));
        assert_eq!(c.ddm_settings().trainer.robin_optimizer, OptimizerKind::adam(1e-3));
        let c = RunConfig::from_toml(text, "t", &["robin_optimizer.learning_rate=2e-4".into()]).unwrap();
        assert_eq!(c.robin_optimizer.learning_rate(), 2e-4);
    }

    #[test]
    fn readme_example_parses() {
        let readme = include_str!("../../../README.md");
        let start = readme.find("```toml\n").unwrap() + 8;
        let len = readme[start..].find("```").unwrap();
        let c = RunConfig::from_toml(&readme[start..start + len], "README.md", &[]).unwrap();
        assert_eq!(c.problem.name, ProblemName::Helmholtz1Way);
        assert_eq!(c, RunConfig::preset(ProblemName::Helmholtz1Way));
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "[problem]\nname = \"poisson_1way\"\n[training]\nepochz = 3\n";
        match RunConfig::from_toml(text, "bad.toml", &[]) {
            Err(e @ ConfigError::Parse { line: Some(4), .. }) => assert!(e.to_string().starts_with("bad.toml:4")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_its_line() {
        let text = "[problem]\nname = \"poisson_1way\"\nseed = = 2\n";
        assert!(matches!(
            RunConfig::from_toml(text, "x", &[]),
            Err(ConfigError::Parse { line: Some(3), .. })
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        let base = "[problem]\nname = \"single_domain\"\n";
        assert!(matches!(
            RunConfig::from_toml(base, "x", &["training.epochs=0".into()]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[problem]\nname = \"poisson_3way\"\n", "x", &[]),
            Err(ConfigError::Parse { line: Some(2), .. })
        ));
        assert!(matches!(
            RunConfig::from_toml(base, "x", &["nodot".into()]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn builds_inverse_problem() {
        let c = RunConfig::preset(ProblemName::InverseCase1);
        let e = c.build().unwrap();
        assert_eq!(e.partition.len(), 4);
        assert!(!e.problem.has_boundary_data(1));
        assert_eq!(e.problem.subdomain(1).measurements.len(), 128);
    }
}
