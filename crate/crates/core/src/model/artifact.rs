//! Deterministic JSON documents for every artifact exchanged between stages.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::{
    FocalMethod, InvariantViolation, KnowledgeItem, Oracle, RulePrompt, ScenarioInstance, ScenarioTemplate,
    TestCase, Validate,
};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("malformed artifact document: {0}")]
    Json(#[from] serde_json::Error),
}

/// A serializable artifact kind. `KIND` doubles as the file suffix
/// (`<name>.<KIND>.json`).
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn check(&self) -> Result<(), InvariantViolation> {
        Ok(())
    }
}

macro_rules! validated_artifact {
    ($ty:ty, $kind:literal) => {
        impl Artifact for $ty {
            const KIND: &'static str = $kind;
            fn check(&self) -> Result<(), InvariantViolation> {
                self.validate()
            }
        }
    };
}

validated_artifact!(FocalMethod, "focal");
validated_artifact!(TestCase, "test");
validated_artifact!(KnowledgeItem, "knowledge");
validated_artifact!(ScenarioTemplate, "template");
validated_artifact!(ScenarioInstance, "instance");
validated_artifact!(Oracle, "oracle");
validated_artifact!(RulePrompt, "rules");

impl<T: Artifact> Artifact for Vec<T> {
    const KIND: &'static str = T::KIND;
    fn check(&self) -> Result<(), InvariantViolation> {
        self.iter().try_for_each(Artifact::check)
    }
}

/// Serializes with sorted object keys and a trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    // serde_json's Map is a BTreeMap without `preserve_order`, so a round
    // trip through Value sorts every object's keys.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn serialize_artifact<A: Artifact>(artifact: &A) -> Result<String, ArtifactError> {
    artifact.check()?;
    Ok(to_canonical_json(artifact)?)
}

pub fn parse_artifact<A: Artifact>(text: &str) -> Result<A, ArtifactError> {
    let artifact: A = serde_json::from_str(text)?;
    artifact.check()?;
    Ok(artifact)
}

/// Template serialization canonicalizes first so that instances always list
/// the primary oracle first.
pub fn serialize_instance(instance: &ScenarioInstance) -> Result<String, ArtifactError> {
    let mut canonical = instance.clone();
    canonical.canonicalize();
    serialize_artifact(&canonical)
}
