//! Run configuration: model, index, synthesis, falsifier and simulation
//! sections in one JSON document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::falsifier::FalsifierConfig;
use crate::feasibility::{SolverConfig, SynthesisOptions, SynthesisProblem};
use crate::polynomial::{parse_poly, Constants, PolyError, Vars};
use crate::refute::RefuteOptions;
use crate::safety_index::{IndexError, SafetyIndexFamily};
use crate::scalar::Scalar;
use crate::sim::SimConfig;
use crate::system::unicycle::UnicycleParams;
use crate::system::{ModelSpec, SymbolicSystem, SystemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {source}")]
    Literal {
        field: String,
        #[source]
        source: PolyError,
    },
    #[error("model: {0}")]
    Model(#[from] SystemError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("{0}")]
    Invalid(String),
    #[error("synthesis setup: {0}")]
    Synthesis(#[from] crate::feasibility::FeasibilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    /// φ₀ literal; may use model constants and `d_min`.
    pub phi0: String,
    pub order: usize,
    pub eta: f64,
    pub d_min: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            phi0: "d_min - d".into(),
            order: 1,
            eta: 0.1,
            d_min: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub restarts: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub margin: f64,
    pub seed: u64,
    pub product_order: usize,
    pub basis_degree: Option<u32>,
    /// Polynomial literals branched on in addition to the control splits.
    pub aux_splits: Vec<String>,
    pub eliminate_affine: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            restarts: s.restarts,
            iterations: s.iterations,
            tolerance: s.tolerance,
            margin: s.margin,
            seed: s.seed,
            product_order: 1,
            basis_degree: None,
            aux_splits: vec!["cos_a".into(), "sin_a".into()],
            eliminate_affine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub index: IndexConfig,
    pub solver: SolverSection,
    pub falsifier: FalsifierConfig,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    /// Unicycle around a unit obstacle with unit speed and turn-rate limits.
    fn default() -> Self {
        let p = UnicycleParams::default();
        Self {
            model: p.model_spec(),
            index: IndexConfig::default(),
            solver: SolverSection::default(),
            falsifier: FalsifierConfig::unicycle(&p, 100),
            sim: SimConfig::default(),
        }
    }
}

/// Symbolic objects built from a config.
#[derive(Debug, Clone)]
pub struct Setup<T> {
    pub vars: Vars,
    pub system: SymbolicSystem<T>,
    pub family: SafetyIndexFamily<T>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            restarts: self.solver.restarts,
            iterations: self.solver.iterations,
            tolerance: self.solver.tolerance,
            margin: self.solver.margin,
            seed: self.solver.seed,
        }
    }

    fn constants(&self) -> Constants {
        let mut c = self.model.constants();
        c.insert("d_min".into(), self.index.d_min);
        c
    }

    pub fn setup<T: Scalar>(&self) -> Result<Setup<T>, ConfigError> {
        if !(self.index.eta > 0.0) {
            return Err(ConfigError::Invalid(format!("index.eta must be positive, got {}", self.index.eta)));
        }
        let mut vars = Vars::new();
        let system = self.model.build::<T>(&mut vars)?;
        let phi0 = parse_poly(&self.index.phi0, &vars, &self.constants()).map_err(|source| ConfigError::Literal {
            field: "index.phi0".into(),
            source,
        })?;
        let family = SafetyIndexFamily::build(&mut vars, phi0, self.index.order, &system)?;
        Ok(Setup { vars, system, family })
    }

    pub fn synthesis_options<T: Scalar>(&self, vars: &Vars) -> Result<SynthesisOptions<T>, ConfigError> {
        if !(1..=2).contains(&self.solver.product_order) {
            return Err(ConfigError::Invalid(format!(
                "solver.product_order must be 1 or 2, got {}",
                self.solver.product_order
            )));
        }
        let consts = self.constants();
        let aux_splits = self
            .solver
            .aux_splits
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse_poly(s, vars, &consts).map_err(|source| ConfigError::Literal {
                    field: format!("solver.aux_splits[{i}]"),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(SynthesisOptions {
            eta: T::lit(self.index.eta),
            aux_splits,
            product_order: self.solver.product_order,
            basis_degree: self.solver.basis_degree,
            refute: RefuteOptions {
                eliminate_affine: self.solver.eliminate_affine,
            },
        })
    }

    /// Setup plus the synthesis problem.
    pub fn problem<T: Scalar>(&self) -> Result<(Setup<T>, SynthesisProblem<T>), ConfigError> {
        let mut setup = self.setup::<T>()?;
        let opts = self.synthesis_options(&setup.vars)?;
        let problem = SynthesisProblem::build(&setup.family, &setup.system, &mut setup.vars, &opts)?;
        Ok((setup, problem))
    }

    /// Unicycle limits for the world-frame simulation, read from the model
    /// constants `v_min, v_max, w_min, w_max`, `dt` and `index.d_min`.
    pub fn unicycle_params(&self) -> Result<UnicycleParams, ConfigError> {
        let get = |name: &str| {
            self.model
                .constants
                .get(name)
                .copied()
                .ok_or_else(|| ConfigError::Invalid(format!("simulation needs model constant `{name}`")))
        };
        if self.model.state_vars != ["d", "sin_a", "cos_a", "v"] {
            return Err(ConfigError::Invalid(
                "simulation needs the unicycle state [d, sin_a, cos_a, v]".into(),
            ));
        }
        Ok(UnicycleParams {
            v_min: get("v_min")?,
            v_max: get("v_max")?,
            w_min: get("w_min")?,
            w_max: get("w_max")?,
            dt: self.model.dt,
            d_min: self.index.d_min,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
        let p = c.unicycle_params().unwrap();
        assert_eq!(p, UnicycleParams::default());
        assert_eq!((c.index.eta, c.solver.tolerance, c.solver.restarts), (0.1, 1e-6, 10));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::from_json("{\n  \"index\": {\"eta\": \"x\"}\n}").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
        let err = RunConfig::from_json("{\"bogus\": 1}").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn bad_literal_names_field() {
        let mut c = RunConfig::default();
        c.solver.aux_splits = vec!["cos_a".into(), "sin_a +* 2".into()];
        let setup = c.setup::<f64>().unwrap();
        let err = c.synthesis_options::<f64>(&setup.vars).unwrap_err();
        assert!(err.to_string().starts_with("solver.aux_splits[1]"), "{err}");
    }

    #[test]
    fn default_problem_has_eight_cases() {
        let (setup, problem) = RunConfig::default().problem::<f64>().unwrap();
        assert_eq!(problem.cases().len(), 8);
        assert_eq!(setup.family.phi().display(&setup.vars).to_string(), "cos_a*v*k - d + 1");
    }
}
