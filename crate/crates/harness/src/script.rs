use std::collections::{BTreeMap, BTreeSet};

use revbridge_core::permissions::BlindMode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

/// A scripted workflow: who does what, in which order, with which expected
/// outcome, plus the bridge faults to inject while doing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub setup: Setup,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setup {
    #[serde(default)]
    pub people: BTreeMap<String, Person>,
    #[serde(default)]
    pub journals: Vec<JournalSetup>,
    /// People configured as document-service administrators.
    #[serde(default)]
    pub doc_admins: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Person {
    pub email: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalSetup {
    pub journal_id: String,
    pub name: String,
    #[serde(default)]
    pub blind_mode: BlindMode,
    #[serde(default = "default_rounds")]
    pub max_rounds: u32,
    #[serde(default)]
    pub editors: Vec<String>,
}

fn default_rounds() -> u32 {
    3
}

fn ok() -> String {
    "ok".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    #[serde(default)]
    pub actor: Option<String>,
    pub action: Action,
    #[serde(default)]
    pub args: Value,
    /// Variables captured from the result: name -> top-level field, or a
    /// JSON pointer when it starts with `/`.
    #[serde(default)]
    pub bind: BTreeMap<String, String>,
    /// `ok` or the expected error class.
    #[serde(default = "ok")]
    pub expect: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    CreateDocument,
    ImportManuscript,
    EditDocument,
    InviteCollaborator,
    AddComment,
    ApproveComment,
    ViewDocument,
    ListDocuments,
    ExportSnapshot,
    SubmitDocument,
    ResubmitDocument,
    FollowSsoLink,
    ListJournals,
    AssignReviewer,
    RespondInvitation,
    SubmitReview,
    RecordDecision,
    OpenRound,
    ViewSubmission,
    ListSubmissions,
    DrainOutbox,
}

impl Action {
    pub fn needs_actor(self) -> bool {
        !matches!(self, Action::ListJournals | Action::DrainOutbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Every bridge message of the step is delivered twice.
    Duplicate,
    /// The scripted clock jumps forward before delivery.
    Delay(u64),
    /// The first delivery attempt of the step is lost, either on the way
    /// there or on the way back.
    DropOnce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub step: usize,
    pub fault: Fault,
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let script: ScenarioScript =
            serde_json::from_str(text).map_err(|e| HarnessError::ScriptParse(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::ScriptParse(m));
        let person = |alias: &str, context: &str| {
            if self.setup.people.contains_key(alias) {
                Ok(())
            } else {
                invalid(format!("{context}: unknown person {alias:?}"))
            }
        };
        for j in &self.setup.journals {
            for e in &j.editors {
                person(e, &format!("journal {}", j.journal_id))?;
            }
        }
        for a in &self.setup.doc_admins {
            person(a, "doc_admins")?;
        }
        let mut bound = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            match &step.actor {
                Some(actor) => person(actor, &format!("step {i}"))?,
                None if step.action.needs_actor() => {
                    return invalid(format!("step {i}: {:?} needs an actor", step.action))
                }
                None => {}
            }
            if !(step.args.is_null() || step.args.is_object()) {
                return invalid(format!("step {i}: args must be an object"));
            }
            let mut missing = Vec::new();
            variables(&step.args, &mut |v| {
                if !bound.contains(v) {
                    missing.push(v.to_string());
                }
            });
            if let Some(v) = missing.first() {
                return invalid(format!("step {i}: ${v} is not bound by an earlier step"));
            }
            for key in ["person", "reviewer"] {
                if let Some(alias) = step.args.get(key).and_then(Value::as_str) {
                    person(alias, &format!("step {i}"))?;
                }
            }
            bound.extend(step.bind.keys().cloned());
        }
        for f in &self.faults {
            if f.step >= self.steps.len() {
                return invalid(format!(
                    "fault at step {} but the script has {} steps",
                    f.step,
                    self.steps.len()
                ));
            }
        }
        Ok(())
    }
}

fn variables(v: &Value, f: &mut impl FnMut(&str)) {
    match v {
        Value::String(s) => {
            if let Some(name) = s.strip_prefix('$') {
                f(name)
            }
        }
        Value::Array(items) => items.iter().for_each(|i| variables(i, f)),
        Value::Object(map) => map.values().for_each(|i| variables(i, f)),
        _ => {}
    }
}

/// Replaces `"$name"` strings with bound values.
pub fn substitute(v: &Value, bindings: &BTreeMap<String, Value>) -> Value {
    match v {
        Value::String(s) => match s.strip_prefix('$').and_then(|n| bindings.get(n)) {
            Some(bound) => bound.clone(),
            None => v.clone(),
        },
        Value::Array(items) => Value::Array(items.iter().map(|i| substitute(i, bindings)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, i)| (k.clone(), substitute(i, bindings)))
                .collect(),
        ),
        other => other.clone(),
    }
}
