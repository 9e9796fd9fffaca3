use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canonical::{canonical_json, sha256_hex};
use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::ids::{DocumentId, JournalId, SubmissionId};
use crate::model::{Decision, SubmissionState};
use crate::permissions::{BlindMode, ServiceSide};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    SubmitDocument,
    Resubmission,
    ReviewerAssigned,
    DecisionRelayed,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] = [
        MessageKind::SubmitDocument,
        MessageKind::Resubmission,
        MessageKind::ReviewerAssigned,
        MessageKind::DecisionRelayed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::SubmitDocument => "SubmitDocument",
            MessageKind::Resubmission => "Resubmission",
            MessageKind::ReviewerAssigned => "ReviewerAssigned",
            MessageKind::DecisionRelayed => "DecisionRelayed",
        }
    }

    /// Payload fields whose values identify the effect of a message. Two
    /// messages with equal identifying fields are the same delivery.
    pub fn identifying_fields(self) -> &'static [&'static str] {
        match self {
            MessageKind::SubmitDocument => {
                &["document_id", "journal_id", "corresponding_author_email"]
            }
            MessageKind::Resubmission => &["submission_id", "round_index"],
            MessageKind::ReviewerAssigned => {
                &["submission_id", "document_id", "round_index", "reviewer_email"]
            }
            MessageKind::DecisionRelayed => &["submission_id", "round_index"],
        }
    }

    pub fn endpoint(self) -> Endpoint {
        match self {
            MessageKind::SubmitDocument => Endpoint::ReviewSubmissions,
            MessageKind::Resubmission => Endpoint::ReviewResubmissions,
            MessageKind::ReviewerAssigned => Endpoint::DocAccounts,
            MessageKind::DecisionRelayed => Endpoint::DocDecisions,
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Receiving routes of the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    DocAccounts,
    DocDecisions,
    ReviewSubmissions,
    ReviewResubmissions,
}

impl Endpoint {
    pub fn path(self) -> &'static str {
        match self {
            Endpoint::DocAccounts => "/bridge/accounts",
            Endpoint::DocDecisions => "/bridge/decisions",
            Endpoint::ReviewSubmissions => "/bridge/submissions",
            Endpoint::ReviewResubmissions => "/bridge/resubmissions",
        }
    }

    pub fn receiver(self) -> ServiceSide {
        match self {
            Endpoint::DocAccounts | Endpoint::DocDecisions => ServiceSide::DocumentService,
            Endpoint::ReviewSubmissions | Endpoint::ReviewResubmissions => {
                ServiceSide::ReviewService
            }
        }
    }
}

/// Document service → review service: a manuscript enters a journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitDocument {
    pub document_id: DocumentId,
    pub journal_id: JournalId,
    pub title: String,
    pub snapshot_hash: String,
    pub corresponding_author_email: String,
    pub author_name: String,
    pub co_author_emails: Vec<String>,
}

/// Document service → review service: a revised manuscript for the next round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resubmission {
    pub submission_id: SubmissionId,
    pub document_id: DocumentId,
    /// Index of the round the revision will be reviewed in.
    pub round_index: u32,
    pub snapshot_hash: String,
}

/// Review service → document service: provision the reviewer and grant access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerAssigned {
    pub submission_id: SubmissionId,
    pub document_id: DocumentId,
    pub round_index: u32,
    pub reviewer_email: String,
    pub reviewer_name: String,
    pub reviewer_number: u32,
    pub blind_mode: BlindMode,
}

/// Review service → document service: the editor decided a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRelayed {
    pub submission_id: SubmissionId,
    pub document_id: DocumentId,
    pub round_index: u32,
    pub decision: Decision,
    pub state: SubmissionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeMessage {
    pub kind: MessageKind,
    pub idempotency_key: String,
    pub issued_at: Timestamp,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
}

impl BridgeMessage {
    pub fn new<P: Serialize>(kind: MessageKind, payload: &P, issued_at: Timestamp) -> Result<Self> {
        let payload = serde_json::to_value(payload)
            .map_err(|e| Error::MalformedMessage(e.to_string()))?;
        Self::from_value(kind, payload, issued_at)
    }

    pub fn from_value(kind: MessageKind, payload: Value, issued_at: Timestamp) -> Result<Self> {
        let idempotency_key = idempotency_key(kind, &payload)?;
        Ok(Self {
            kind,
            idempotency_key,
            issued_at,
            payload,
            signature: None,
        })
    }

    /// The canonical bytes that are signed and sent as the request body.
    pub fn body_bytes(&self) -> Vec<u8> {
        canonical_json(&json!({
            "idempotency_key": self.idempotency_key,
            "issued_at": self.issued_at,
            "kind": self.kind,
            "payload": self.payload,
        }))
    }

    /// Parses a received body; the signature must already have been checked
    /// against these exact bytes. The key in the body must match both the
    /// header and the key recomputed from the payload.
    pub fn parse_body(body: &[u8], header_key: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            idempotency_key: String,
            issued_at: Timestamp,
            kind: MessageKind,
            payload: Value,
        }
        let wire: Wire =
            serde_json::from_slice(body).map_err(|e| Error::MalformedMessage(e.to_string()))?;
        let expected = idempotency_key(wire.kind, &wire.payload)?;
        if wire.idempotency_key != expected || header_key != expected {
            return Err(Error::MalformedMessage("idempotency key mismatch".into()));
        }
        Ok(Self {
            kind: wire.kind,
            idempotency_key: wire.idempotency_key,
            issued_at: wire.issued_at,
            payload: wire.payload,
            signature: None,
        })
    }

    pub fn decode<P: DeserializeOwned>(&self) -> Result<P> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| Error::MalformedMessage(format!("{} payload: {e}", self.kind)))
    }
}

/// SHA-256 over the kind tag, a newline, and the canonical JSON of the
/// kind's identifying fields. Absent, null or empty-string fields are missing.
pub fn idempotency_key(kind: MessageKind, payload: &Value) -> Result<String> {
    let mut identifying = Map::new();
    for field in kind.identifying_fields() {
        let value = payload.get(*field);
        let missing = match value {
            None | Some(Value::Null) => true,
            Some(Value::String(s)) => s.trim().is_empty(),
            Some(_) => false,
        };
        if missing {
            return Err(Error::MissingField(field.to_string()));
        }
        let mut value = value.cloned().unwrap_or(Value::Null);
        if field.ends_with("email") {
            if let Value::String(s) = &value {
                value = Value::String(s.trim().to_lowercase());
            }
        }
        identifying.insert(field.to_string(), value);
    }
    let mut input = kind.as_str().as_bytes().to_vec();
    input.push(b'\n');
    input.extend(canonical_json(&Value::Object(identifying)));
    Ok(sha256_hex(&input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assigned(round: u32, email: &str) -> ReviewerAssigned {
        ReviewerAssigned {
            submission_id: "sub-1".into(),
            document_id: "doc-1".into(),
            round_index: round,
            reviewer_email: email.into(),
            reviewer_name: "Kim".into(),
            reviewer_number: 1,
            blind_mode: BlindMode::Open,
        }
    }

    #[test]
    fn keys_are_deterministic() {
        let a = BridgeMessage::new(MessageKind::ReviewerAssigned, &assigned(1, "k@x.org"), Timestamp(1)).unwrap();
        let b = BridgeMessage::new(MessageKind::ReviewerAssigned, &assigned(1, "k@x.org"), Timestamp(99)).unwrap();
        assert_eq!(a.idempotency_key, b.idempotency_key);
        assert_eq!(a.idempotency_key.len(), 64);
    }

    #[test]
    fn missing_email_is_reported() {
        let err = BridgeMessage::new(MessageKind::ReviewerAssigned, &assigned(1, ""), Timestamp(1)).unwrap_err();
        assert_eq!(err, Error::MissingField("reviewer_email".into()));
        let err = idempotency_key(MessageKind::DecisionRelayed, &json!({"submission_id": "s"})).unwrap_err();
        assert_eq!(err, Error::MissingField("round_index".into()));
    }

    /// Perturb every identifying field of every kind in turn; all resulting
    /// keys must be pairwise distinct, and perturbing a non-identifying
    /// field must leave the key unchanged.
    #[test]
    fn field_perturbations_give_distinct_keys() {
        let base: Value = json!({
            "document_id": "doc-1", "journal_id": "mda", "corresponding_author_email": "ana@x.org",
            "submission_id": "sub-1", "round_index": 1, "reviewer_email": "kim@x.org",
            "reviewer_name": "Kim", "snapshot_hash": "ab",
        });
        let mut keys = std::collections::HashSet::new();
        for kind in MessageKind::ALL {
            let k0 = idempotency_key(kind, &base).unwrap();
            assert!(keys.insert(k0.clone()), "{kind} collides with another kind");
            for field in kind.identifying_fields() {
                let mut changed = base.clone();
                changed[*field] = match &base[*field] {
                    Value::Number(n) => json!(n.as_u64().unwrap() + 1),
                    Value::String(s) => json!(format!("{s}2")),
                    _ => unreachable!(),
                };
                let k = idempotency_key(kind, &changed).unwrap();
                assert!(keys.insert(k), "{kind}.{field} perturbation collided");
            }
            let mut cosmetic = base.clone();
            cosmetic["reviewer_name"] = json!("Someone Else");
            cosmetic["snapshot_hash"] = json!("cd");
            assert_eq!(idempotency_key(kind, &cosmetic).unwrap(), k0);
        }
    }

    #[test]
    fn body_parses_back() {
        let m = BridgeMessage::new(MessageKind::ReviewerAssigned, &assigned(2, "k@x.org"), Timestamp(7)).unwrap();
        let back = BridgeMessage::parse_body(&m.body_bytes(), &m.idempotency_key).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.decode::<ReviewerAssigned>().unwrap(), assigned(2, "k@x.org"));
        assert_eq!(
            BridgeMessage::parse_body(&m.body_bytes(), "deadbeef").unwrap_err().class(),
            "MalformedMessage"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn keys_agree_iff_identifying_fields_agree(
            s1 in 0u8..3, s2 in 0u8..3, r1 in 1u32..3, r2 in 1u32..3,
            e1 in 0u8..3, e2 in 0u8..3, n1 in "[a-z]{0,3}", n2 in "[a-z]{0,3}",
        ) {
            let mk = |s: u8, r: u32, e: u8, n: &str| json!({
                "submission_id": format!("sub-{s}"), "document_id": "doc-1", "round_index": r,
                "reviewer_email": format!("r{e}@x.org"), "reviewer_name": n,
            });
            let k1 = idempotency_key(MessageKind::ReviewerAssigned, &mk(s1, r1, e1, &n1)).unwrap();
            let k2 = idempotency_key(MessageKind::ReviewerAssigned, &mk(s2, r2, e2, &n2)).unwrap();
            prop_assert_eq!(k1 == k2, (s1, r1, e1) == (s2, r2, e2));
        }
    }
}
