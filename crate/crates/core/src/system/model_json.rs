use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SymbolicSystem, SystemError, SystemParts};
use crate::polynomial::{parse_poly, Constants, Polynomial, Vars};
use crate::scalar::Scalar;

/// JSON form of a [`SymbolicSystem`]; every entry is a polynomial literal.
///
/// `dt` and any extra `constants` may appear in literals by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub state_vars: Vec<String>,
    pub f: Vec<String>,
    pub g: Vec<Vec<String>>,
    pub u_lower: Vec<String>,
    pub u_upper: Vec<String>,
    #[serde(default)]
    pub h: Vec<String>,
    #[serde(default)]
    pub zeta: Vec<String>,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
}

impl ModelSpec {
    /// Named constants visible to literals (user constants plus `dt`).
    pub fn constants(&self) -> Constants {
        let mut c: Constants = self.constants.clone().into_iter().collect();
        c.insert("dt".to_string(), self.dt);
        c
    }

    /// Registers the state variables in `vars` and parses every literal.
    pub fn build<T: Scalar>(&self, vars: &mut Vars) -> Result<SymbolicSystem<T>, SystemError> {
        if !(self.dt > 0.0) {
            return Err(SystemError::Model(format!("dt must be positive, got {}", self.dt)));
        }
        let consts = self.constants();
        let mut state_vars = Vec::with_capacity(self.state_vars.len());
        for name in &self.state_vars {
            if consts.contains_key(name) {
                return Err(SystemError::Model(format!(
                    "state variable `{name}` shadows a constant"
                )));
            }
            state_vars.push(vars.state(name)?);
        }
        let parse = |s: &String| -> Result<Polynomial<T>, SystemError> {
            Ok(parse_poly(s, vars, &consts)?)
        };
        let list = |v: &[String]| v.iter().map(parse).collect::<Result<Vec<_>, _>>();
        SymbolicSystem::new(SystemParts {
            state_vars,
            f: list(&self.f)?,
            g: self
                .g
                .iter()
                .map(|row| list(row))
                .collect::<Result<_, _>>()?,
            lower: list(&self.u_lower)?,
            upper: list(&self.u_upper)?,
            h: list(&self.h)?,
            zeta: list(&self.zeta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE_INTEGRATOR: &str = r#"{
        "state_vars": ["p", "v"],
        "f": ["v", "0"],
        "g": [["0"], ["1"]],
        "u_lower": ["-1"],
        "u_upper": ["1"],
        "h": ["1 - v^2"],
        "zeta": [],
        "dt": 0.01
    }"#;

    #[test]
    fn parses_model_json() {
        let spec: ModelSpec = serde_json::from_str(DOUBLE_INTEGRATOR).unwrap();
        let mut vars = Vars::new();
        let sys: SymbolicSystem<f64> = spec.build(&mut vars).unwrap();
        assert_eq!(sys.state_dim(), 2);
        assert_eq!(sys.control_dims(), 1);
        assert!(sys.in_state_space(&[4.0, 0.5]));
        assert!(!sys.in_state_space(&[4.0, 1.5]));
    }

    #[test]
    fn reports_bad_literals_and_fields() {
        let mut spec: ModelSpec = serde_json::from_str(DOUBLE_INTEGRATOR).unwrap();
        spec.f[0] = "v +* 2".into();
        let err = spec.build::<f64>(&mut Vars::new()).unwrap_err();
        assert!(matches!(err, SystemError::Poly(_)));

        let extra = DOUBLE_INTEGRATOR.replace("\"dt\"", "\"bogus\": 1, \"dt\"");
        assert!(serde_json::from_str::<ModelSpec>(&extra).is_err());
    }
}
