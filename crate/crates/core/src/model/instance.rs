use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InvariantViolation, ScenarioTemplate, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Primary,
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleBasis {
    ImplementationDeduced,
    RequirementInferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oracle {
    pub kind: OracleKind,
    pub statement: String,
    pub basis: OracleBasis,
}

impl Oracle {
    pub fn primary(statement: impl Into<String>) -> Self {
        Self { kind: OracleKind::Primary, statement: statement.into(), basis: OracleBasis::ImplementationDeduced }
    }

    pub fn alternative(statement: impl Into<String>) -> Self {
        Self { kind: OracleKind::Alternative, statement: statement.into(), basis: OracleBasis::RequirementInferred }
    }
}

impl Validate for Oracle {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.kind == OracleKind::Primary && self.basis != OracleBasis::ImplementationDeduced {
            return Err(InvariantViolation::new("oracle", "primary oracle is implementation-deduced"));
        }
        if self.statement.trim().is_empty() {
            return Err(InvariantViolation::new("oracle", "statement non-empty"));
        }
        Ok(())
    }
}

/// Value a dependent step takes for a VP declared earlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepResolution {
    pub vp: String,
    pub step: u32,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    /// Content digest of the template this instance was filled from.
    pub template_ref: String,
    pub settings: BTreeMap<String, String>,
    pub setting_deps: Vec<DepResolution>,
    /// Primary oracle first, alternatives after in their original order.
    pub oracles: Vec<Oracle>,
    pub active_oracle: usize,
    pub narrative: String,
}

impl ScenarioInstance {
    pub fn active(&self) -> &Oracle {
        &self.oracles[self.active_oracle]
    }

    pub fn primary(&self) -> &Oracle {
        &self.oracles[0]
    }

    /// Moves the primary oracle to the front, keeping the active oracle.
    pub fn canonicalize(&mut self) {
        if let Some(pos) = self.oracles.iter().position(|o| o.kind == OracleKind::Primary) {
            if pos != 0 {
                let primary = self.oracles.remove(pos);
                self.oracles.insert(0, primary);
                self.active_oracle = match self.active_oracle {
                    a if a == pos => 0,
                    a if a < pos => a + 1,
                    a => a,
                };
            }
        }
    }

    /// Totality and declared-VP membership against the source template.
    pub fn validate_against(&self, template: &ScenarioTemplate) -> Result<(), InvariantViolation> {
        let declared: Vec<&str> = template.vp_names().collect();
        for key in self.settings.keys() {
            if !declared.contains(&key.as_str()) {
                return Err(InvariantViolation::new("scenario_instance", format!("setting `{key}` names a declared VP")));
            }
        }
        if self.settings.len() != declared.len() {
            return Err(InvariantViolation::new("scenario_instance", "settings cover every VP exactly once"));
        }
        Ok(())
    }
}

impl Validate for ScenarioInstance {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let err = |s: &str| Err(InvariantViolation::new("scenario_instance", s));
        if self.oracles.is_empty() {
            return err("oracles non-empty");
        }
        for o in &self.oracles {
            o.validate()?;
        }
        let primaries = self.oracles.iter().filter(|o| o.kind == OracleKind::Primary).count();
        if primaries != 1 {
            return err("exactly one primary oracle");
        }
        if self.oracles[0].kind != OracleKind::Primary {
            return err("primary oracle listed first");
        }
        if self.active_oracle >= self.oracles.len() {
            return err("active oracle in range");
        }
        if self.settings.is_empty() {
            return err("settings non-empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_moves_primary_first() {
        let mut inst = ScenarioInstance {
            template_ref: "t".into(),
            settings: [("shape".to_string(), "fillOval".to_string())].into(),
            setting_deps: vec![],
            oracles: vec![Oracle::alternative("alt"), Oracle::primary("prim")],
            active_oracle: 1,
            narrative: String::new(),
        };
        assert!(inst.validate().is_err());
        inst.canonicalize();
        assert_eq!(inst.oracles[0].statement, "prim");
        assert_eq!(inst.active_oracle, 0);
        inst.validate().unwrap();
    }

    #[test]
    fn primary_basis_enforced() {
        let o = Oracle { kind: OracleKind::Primary, statement: "x".into(), basis: OracleBasis::RequirementInferred };
        assert!(o.validate().is_err());
    }
}
