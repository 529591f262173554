use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::grid::{Cell, GridSpec};

/// Opaque individual identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// One contiguous visit to a grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stay {
    pub cell: Cell,
    /// Absolute slot index from the start of the simulation.
    pub start_slot: u64,
    pub duration_slots: u32,
}

impl Stay {
    pub fn end_slot(&self) -> u64 {
        self.start_slot + self.duration_slots as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: Option<UserId>,
    pub stays: Vec<Stay>,
    pub num_days: u32,
}

impl Trajectory {
    /// Build a trajectory, checking ordering, non-overlap and bounds.
    pub fn new(
        user_id: Option<UserId>,
        stays: Vec<Stay>,
        num_days: u32,
        grid: &GridSpec,
    ) -> Result<Self> {
        let t = Trajectory {
            user_id,
            stays,
            num_days,
        };
        t.validate(grid)?;
        Ok(t)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.num_days == 0 {
            return Err(Error::InvalidTrajectory("num_days must be positive".into()));
        }
        let horizon = self.num_days as u64 * grid.slots_per_day as u64;
        for (i, s) in self.stays.iter().enumerate() {
            if s.duration_slots == 0 {
                return Err(Error::InvalidTrajectory(format!("stay {i} has zero duration")));
            }
            if s.start_slot >= horizon {
                return Err(Error::InvalidTrajectory(format!(
                    "stay {i} starts at slot {} beyond the {horizon}-slot horizon",
                    s.start_slot
                )));
            }
            if i > 0 && self.stays[i - 1].end_slot() > s.start_slot {
                return Err(Error::InvalidTrajectory(format!(
                    "stay {i} overlaps its predecessor"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }
}

/// A profile attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Numeric(f64),
    Categorical(String),
}

impl std::fmt::Display for AttrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttrValue::Numeric(v) => write!(f, "{v}"),
            AttrValue::Categorical(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub attributes: Vec<(String, AttrValue)>,
}

impl UserProfile {
    pub fn get(&self, key: &str) -> Option<&AttrValue> {
        self.attributes.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> Vec<&str> {
        self.attributes.iter().map(|(k, _)| k.as_str()).collect()
    }
}

/// The structured prompt of one individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptDoc {
    pub profile: UserProfile,
    pub base_text: String,
    pub constraints: Vec<String>,
    pub persona: String,
    pub params: GeneratorParams,
    pub revision: u32,
}

impl PromptDoc {
    pub fn user_id(&self) -> &UserId {
        &self.profile.id
    }

    /// Text sent to an external generator: task, profile, persona and constraints.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.base_text);
        out.push_str("\n\nProfile:\n");
        for (k, v) in &self.profile.attributes {
            out.push_str(&format!("- {k}: {v}\n"));
        }
        out.push_str("\nPersona:\n");
        out.push_str(&self.persona);
        out.push('\n');
        if !self.constraints.is_empty() {
            out.push_str("\nBehavioral constraints:\n");
            for c in &self.constraints {
                out.push_str(&format!("- {c}\n"));
            }
        }
        out
    }
}

/// Content hash identifying a [`PromptSet`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub String);

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The search state: one prompt per individual plus the generation seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    pub seed: u64,
    pub prompts: BTreeMap<UserId, PromptDoc>,
}

#[derive(Serialize, Deserialize)]
struct PromptSetRepr {
    seed: u64,
    prompts: Vec<PromptDoc>,
}

impl Serialize for PromptSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PromptSetRepr {
            seed: self.seed,
            prompts: self.prompts.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PromptSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PromptSetRepr::deserialize(d)?;
        let mut prompts = BTreeMap::new();
        for p in repr.prompts {
            let id = p.profile.id.clone();
            if prompts.insert(id.clone(), p).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate user id {id}")));
            }
        }
        Ok(PromptSet {
            seed: repr.seed,
            prompts,
        })
    }
}

impl PromptSet {
    pub fn new(seed: u64, docs: impl IntoIterator<Item = PromptDoc>) -> Result<Self> {
        let mut prompts = BTreeMap::new();
        for d in docs {
            d.params.validate()?;
            let id = d.profile.id.clone();
            if prompts.insert(id.clone(), d).is_some() {
                return Err(Error::InvalidParams(format!("duplicate user id {id}")));
            }
        }
        Ok(PromptSet { seed, prompts })
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Canonical serialized form; equal sets have equal bytes.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("prompt set serializes")
    }

    pub fn content_hash(&self) -> StateId {
        let digest = Sha256::digest(self.to_canonical_json().as_bytes());
        StateId(hex::encode(&digest[..16]))
    }
}
