//! Declarative experiment configuration in TOML.

use godi_core::model::{Problem, Qoi, QoiTerm, Signal, SignalTerm, SplittingScheme};
use godi_core::Scheme;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESETS: [(&str, &str); 3] = [
    ("exp1", include_str!("../presets/exp1.toml")),
    ("exp2", include_str!("../presets/exp2.toml")),
    ("exp3", include_str!("../presets/exp3.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub qoi: Vec<QoiSpec>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub interval: [f64; 2],
    pub matrix: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub forcing: Vec<Vec<SignalTerm>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiSpec {
    pub time: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplittingSpec {
    Named(SplittingName),
    Custom { mask: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingName {
    Jacobi,
    GaussSeidel,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub splitting: SplittingSpec,
    pub k_max: usize,
    pub n_init: usize,
    pub goal_levels: usize,
    pub goal_fraction: f64,
    pub uniform_levels: usize,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| *text)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`")))?;
        parse_config(text)
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let p = &self.problem;
        let m = p.matrix.len();
        if let Some((row, r)) = p.matrix.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(CliError::Config(format!(
                "problem.matrix row {} has {} entries, expected {m}",
                row + 1,
                r.len()
            )));
        }
        let matrix = DMatrix::from_fn(m, m, |r, c| p.matrix[r][c]);
        Problem::new(
            matrix,
            Signal::new(p.forcing.clone()),
            DVector::from_column_slice(&p.initial),
            (p.interval[0], p.interval[1]),
        )
        .map_err(|e| CliError::Config(format!("problem: {e}")))
    }

    pub fn qoi(&self, problem: &Problem) -> Result<Qoi, CliError> {
        let terms = self
            .qoi
            .iter()
            .map(|t| QoiTerm {
                time: t.time,
                weights: DVector::from_column_slice(&t.weights),
            })
            .collect();
        Qoi::new(terms, problem).map_err(|e| CliError::Config(format!("qoi: {e}")))
    }

    pub fn splitting(&self) -> Result<SplittingScheme, CliError> {
        Ok(match &self.run.splitting {
            SplittingSpec::Named(SplittingName::Jacobi) => SplittingScheme::Jacobi,
            SplittingSpec::Named(SplittingName::GaussSeidel) => SplittingScheme::GaussSeidel,
            SplittingSpec::Named(SplittingName::Full) => SplittingScheme::Full,
            SplittingSpec::Custom { mask } => {
                let m = mask.len();
                if mask.iter().any(|r| r.len() != m) {
                    return Err(CliError::Config("run.splitting.mask must be square".into()));
                }
                SplittingScheme::Custom(DMatrix::from_fn(m, m, |r, c| mask[r][c]))
            }
        })
    }

    /// Checks that every part converts into a valid core object.
    pub fn validate(&self) -> Result<(), CliError> {
        let problem = self.problem()?;
        self.qoi(&problem)?;
        let splitting = self.splitting()?;
        godi_core::model::build_splitting(problem.matrix(), &splitting)
            .map_err(|e| CliError::Config(format!("run.splitting: {e}")))?;
        if self.run.k_max == 0 {
            return Err(CliError::Config("run.k_max must be at least 1".into()));
        }
        if self.run.n_init < 2 {
            return Err(CliError::Config("run.n_init must be at least 2".into()));
        }
        if !(self.run.goal_fraction > 0.0 && self.run.goal_fraction <= 1.0) {
            return Err(CliError::Config(
                "run.goal_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn format_config(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configuration is always serializable")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeArg {
    Euler,
    Cn,
}

impl SchemeArg {
    pub fn scheme(self) -> Scheme {
        match self {
            SchemeArg::Euler => Scheme::ExplicitEuler,
            SchemeArg::Cn => Scheme::CrankNicolson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Refinement {
    Goal,
    Uniform,
}

impl Refinement {
    pub fn name(self) -> &'static str {
        match self {
            Refinement::Goal => "goal",
            Refinement::Uniform => "uniform",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            assert_eq!(c.name, name);
            let again = parse_config(&format_config(&c)).unwrap();
            assert_eq!(again, c);
        }
    }

    #[test]
    fn exp1_contents() {
        let c = ExperimentConfig::preset("exp1").unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p.matrix().as_slice(), &[10.0, 1.0, -1.0, 10.0]);
        assert_eq!(p.initial().as_slice(), &[-0.1, 0.1]);
        assert_eq!(p.interval(), (0.0, 3.0));
        let q = c.qoi(&p).unwrap();
        assert_eq!(q.terms().len(), 2);
        assert_eq!(q.terms()[1].weights.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn exp2_and_exp3_contents() {
        let c = ExperimentConfig::preset("exp2").unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p.dim(), 4);
        assert_eq!(p.tn(), 2.5);
        let q = c.qoi(&p).unwrap();
        assert_eq!(q.terms()[0].time, 0.5);
        assert_eq!(q.terms()[0].weights.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(q.terms()[1].weights.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        let c = ExperimentConfig::preset("exp3").unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p.matrix()[(0, 1)], 2.0);
        assert_eq!(p.matrix()[(1, 1)], 2.5);
        assert_eq!(p.tn(), 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        let base = PRESETS[0].1;
        assert!(matches!(parse_config("name = "), Err(CliError::Config(_))));
        let unknown = base.replace("k_max = 20", "k_max = 20\nbogus = 1");
        assert!(parse_config(&unknown).is_err());
        let mismatch = base.replace("initial = [-0.1, 0.1]", "initial = [-0.1]");
        assert!(parse_config(&mismatch).is_err());
        let outside = base.replace("time = 2.0", "time = 7.0");
        assert!(parse_config(&outside).is_err());
        let ragged = base.replace("[1.0, 10.0]]", "[1.0]]");
        assert!(parse_config(&ragged).is_err());
    }

    #[test]
    fn custom_mask() {
        let text = PRESETS[0].1.replace(
            "splitting = \"jacobi\"",
            "splitting = { mask = [[1.0, 0.0], [1.0, 1.0]] }",
        );
        let c = parse_config(&text).unwrap();
        assert!(matches!(c.splitting().unwrap(), SplittingScheme::Custom(_)));
        assert_eq!(parse_config(&format_config(&c)).unwrap(), c);
    }
}
