use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Fields holding clock readings; left out when comparing runs.
pub const TIMESTAMP_FIELDS: [&str; 6] = [
    "at",
    "created_at",
    "issued_at",
    "opened_at",
    "granted_at",
    "expires_at",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub actor: Option<String>,
    pub action: String,
    pub expect: String,
    pub outcome: String,
    pub matched: bool,
    pub result: Value,
}

/// Everything observable after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    /// Submissions as the first journal editor lists them at the end.
    pub submissions: Value,
    pub doc_events: Value,
    pub review_events: Value,
    pub outbox: Value,
    /// Cross-service consistency problems found after the run.
    pub violations: Vec<String>,
}

impl RunReport {
    pub fn steps_passed(&self) -> bool {
        self.steps.iter().all(|s| s.matched) && self.violations.is_empty()
    }

    /// The report with generated ids and login tokens renumbered by first
    /// appearance.
    pub fn normalized(&self) -> Value {
        normalize(&serde_json::to_value(self).expect("report serializes"))
    }

    /// Normalized pretty JSON, the golden-file format.
    pub fn golden_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.normalized()).expect("json");
        text.push('\n');
        text
    }
}

static ID: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(usr|doc|sub|asg|cmt|msg|ses)-[0-9a-f]{12}\b").expect("valid regex")
});
static TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9_-]{20,}\.[0-9a-f]{64}").expect("valid regex"));

#[derive(Default)]
struct Renumber {
    seen: BTreeMap<String, String>,
    counters: BTreeMap<String, usize>,
}

impl Renumber {
    fn name(&mut self, raw: &str, prefix: &str) -> String {
        if let Some(n) = self.seen.get(raw) {
            return n.clone();
        }
        let c = self.counters.entry(prefix.to_string()).or_default();
        *c += 1;
        let n = format!("{prefix}#{c}");
        self.seen.insert(raw.to_string(), n.clone());
        n
    }

    fn text(&mut self, s: &str) -> String {
        let s = TOKEN.replace_all(s, |c: &regex::Captures| self.name(&c[0], "sso"));
        ID.replace_all(&s, |c: &regex::Captures| self.name(&c[0], &c[1]))
            .into_owned()
    }

    fn value(&mut self, v: &Value) -> Value {
        match v {
            Value::String(s) => Value::String(self.text(s)),
            Value::Array(items) => Value::Array(items.iter().map(|i| self.value(i)).collect()),
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, i)| (self.text(k), self.value(i)))
                    .collect(),
            ),
            other => other.clone(),
        }
    }
}

/// Renumbers generated ids (`usr-…`, `doc-…`, …) and signed login tokens in
/// order of first appearance.
pub fn normalize(v: &Value) -> Value {
    Renumber::default().value(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Difference {
    pub path: String,
    pub left: Option<Value>,
    pub right: Option<Value>,
}

/// Differences between two reports after normalization, skipping object
/// fields named in `ignore`.
pub fn diff_state(a: &RunReport, b: &RunReport, ignore: &BTreeSet<String>) -> Vec<Difference> {
    let mut out = Vec::new();
    diff_values("", &a.normalized(), &b.normalized(), ignore, &mut out);
    out
}

pub fn timestamp_fields() -> BTreeSet<String> {
    TIMESTAMP_FIELDS.iter().map(|s| s.to_string()).collect()
}

fn diff_values(
    path: &str,
    a: &Value,
    b: &Value,
    ignore: &BTreeSet<String>,
    out: &mut Vec<Difference>,
) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys.into_iter().filter(|k| !ignore.contains(*k)) {
                let p = format!("{path}/{k}");
                match (x.get(k), y.get(k)) {
                    (Some(l), Some(r)) => diff_values(&p, l, r, ignore, out),
                    (l, r) => out.push(Difference {
                        path: p,
                        left: l.cloned(),
                        right: r.cloned(),
                    }),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            for i in 0..x.len().max(y.len()) {
                let p = format!("{path}/{i}");
                match (x.get(i), y.get(i)) {
                    (Some(l), Some(r)) => diff_values(&p, l, r, ignore, out),
                    (l, r) => out.push(Difference {
                        path: p,
                        left: l.cloned(),
                        right: r.cloned(),
                    }),
                }
            }
        }
        (l, r) if l != r => out.push(Difference {
            path: path.to_string(),
            left: Some(l.clone()),
            right: Some(r.clone()),
        }),
        _ => {}
    }
}
