use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PolyError;

/// Which side of the synthesis problem a variable lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarClass {
    /// A coordinate of the system state.
    State,
    /// An unknown of the feasibility problem (index gains, multipliers).
    Decision,
}

/// Handle to a variable registered in a [`Vars`] registry.
///
/// Ordering follows registration order, which drives the monomial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId {
    index: u32,
    class: VarClass,
}

impl VarId {
    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn class(self) -> VarClass {
        self.class
    }

    pub fn is_state(self) -> bool {
        self.class == VarClass::State
    }

    pub fn is_decision(self) -> bool {
        self.class == VarClass::Decision
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.index)
    }
}

/// Variable registry. Names are unique and a variable's class never changes.
#[derive(Debug, Clone, Default)]
pub struct Vars {
    names: Vec<String>,
    classes: Vec<VarClass>,
    lookup: HashMap<String, VarId>,
}

impl Vars {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or returns the existing) state variable `name`.
    pub fn state(&mut self, name: &str) -> Result<VarId, PolyError> {
        self.register(name, VarClass::State)
    }

    /// Registers (or returns the existing) decision variable `name`.
    pub fn decision(&mut self, name: &str) -> Result<VarId, PolyError> {
        self.register(name, VarClass::Decision)
    }

    pub fn register(&mut self, name: &str, class: VarClass) -> Result<VarId, PolyError> {
        if let Some(&id) = self.lookup.get(name) {
            if id.class != class {
                return Err(PolyError::ClassConflict {
                    name: name.to_string(),
                    existing: id.class,
                });
            }
            return Ok(id);
        }
        if !is_identifier(name) {
            return Err(PolyError::BadName(name.to_string()));
        }
        let id = VarId {
            index: self.names.len() as u32,
            class,
        };
        self.names.push(name.to_string());
        self.classes.push(class);
        self.lookup.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = VarId> + '_ {
        self.classes.iter().enumerate().map(|(i, &class)| VarId {
            index: i as u32,
            class,
        })
    }

    pub fn of_class(&self, class: VarClass) -> impl Iterator<Item = VarId> + '_ {
        self.iter().filter(move |v| v.class == class)
    }
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_is_idempotent_and_class_is_fixed() {
        let mut vars = Vars::new();
        let x = vars.state("x").unwrap();
        assert_eq!(vars.state("x").unwrap(), x);
        assert!(matches!(
            vars.decision("x"),
            Err(PolyError::ClassConflict { .. })
        ));
        let k = vars.decision("k").unwrap();
        assert!(x < k);
        assert_eq!(vars.name(k), "k");
        assert_eq!(vars.of_class(VarClass::State).count(), 1);
    }

    #[test]
    fn rejects_non_identifiers() {
        let mut vars = Vars::new();
        assert!(vars.state("2x").is_err());
        assert!(vars.state("a-b").is_err());
        assert!(vars.state("cos_a").is_ok());
    }
}
