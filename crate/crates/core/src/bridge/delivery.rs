use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::message::{BridgeMessage, Endpoint, MessageKind};
use super::signing::sign_message;
use crate::clock::Clock;
use crate::error::{Error, Result};

/// A signed message ready to cross the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeRequest {
    pub endpoint: Endpoint,
    pub body: Vec<u8>,
    pub signature: String,
    pub idempotency_key: String,
}

impl BridgeRequest {
    pub fn from_signed(message: &BridgeMessage) -> Result<Self> {
        let signature = message
            .signature
            .clone()
            .ok_or_else(|| Error::MalformedMessage("message is not signed".into()))?;
        Ok(Self {
            endpoint: message.kind.endpoint(),
            body: message.body_bytes(),
            signature,
            idempotency_key: message.idempotency_key.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeResponse {
    pub status: u16,
    pub body: Value,
}

/// Receiver's acknowledgement body for a 2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub duplicate: bool,
    pub result: Value,
}

/// The request may or may not have reached the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure(pub String);

pub trait Transport: Send + Sync {
    fn send(&self, request: &BridgeRequest) -> std::result::Result<BridgeResponse, TransportFailure>;
}

/// Exponential backoff between attempts: `initial * 2^(n-1)` after the n-th
/// failure, capped at `max_backoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    /// Wait after the `failed_attempt`-th failure (1-based).
    pub fn backoff_after(&self, failed_attempt: u32) -> Duration {
        let shift = failed_attempt.saturating_sub(1).min(31);
        self.initial_backoff
            .saturating_mul(1u32 << shift)
            .min(self.max_backoff)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub kind: MessageKind,
    pub endpoint: Endpoint,
    pub idempotency_key: String,
    pub attempts: u32,
    pub duplicate: bool,
    pub status: u16,
    pub result: Value,
}

/// At-least-once delivery. Transport failures and 5xx answers are retried
/// with backoff; any 4xx answer is final and surfaces as `ProtocolError`.
pub fn deliver(
    message: &BridgeMessage,
    transport: &dyn Transport,
    policy: &RetryPolicy,
    clock: &dyn Clock,
) -> Result<DeliveryReport> {
    let request = BridgeRequest::from_signed(message)?;
    let mut last_error = String::new();
    let max_attempts = policy.max_attempts.max(1);
    for attempt in 1..=max_attempts {
        match transport.send(&request) {
            Ok(resp) if (200..300).contains(&resp.status) => {
                let ack: Ack = serde_json::from_value(resp.body.clone()).map_err(|e| {
                    Error::ProtocolError {
                        status: resp.status,
                        class: "MalformedAck".into(),
                        message: e.to_string(),
                    }
                })?;
                return Ok(DeliveryReport {
                    kind: message.kind,
                    endpoint: request.endpoint,
                    idempotency_key: request.idempotency_key,
                    attempts: attempt,
                    duplicate: ack.duplicate,
                    status: resp.status,
                    result: ack.result,
                });
            }
            Ok(resp) if (400..500).contains(&resp.status) => {
                return Err(Error::ProtocolError {
                    status: resp.status,
                    class: resp.body["error"].as_str().unwrap_or("Unknown").to_string(),
                    message: resp.body["message"].as_str().unwrap_or_default().to_string(),
                });
            }
            Ok(resp) => last_error = format!("receiver answered {}", resp.status),
            Err(TransportFailure(reason)) => last_error = reason,
        }
        tracing::debug!(kind = %message.kind, attempt, %last_error, "bridge delivery attempt failed");
        if attempt < max_attempts {
            clock.sleep(policy.backoff_after(attempt));
        }
    }
    Err(Error::DeliveryExhausted {
        attempts: max_attempts,
        last_error,
    })
}

/// Outgoing side of a service: signs, delivers and remembers what happened.
pub struct Courier {
    secret: Vec<u8>,
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
    reports: Mutex<Vec<DeliveryReport>>,
}

impl Courier {
    pub fn new(
        secret: impl Into<Vec<u8>>,
        transport: Arc<dyn Transport>,
        policy: RetryPolicy,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(Error::EmptySecret);
        }
        Ok(Self {
            secret,
            transport,
            policy,
            clock,
            reports: Mutex::new(Vec::new()),
        })
    }

    pub fn send<P: Serialize>(&self, kind: MessageKind, payload: &P) -> Result<DeliveryReport> {
        let message = BridgeMessage::new(kind, payload, self.clock.now())?;
        let signed = sign_message(&self.secret, &message)?;
        let report = deliver(&signed, self.transport.as_ref(), &self.policy, self.clock.as_ref());
        match &report {
            Ok(r) => self.reports.lock().push(r.clone()),
            Err(e) => tracing::warn!(%kind, error = %e, "bridge delivery failed"),
        }
        report
    }

    pub fn reports(&self) -> Vec<DeliveryReport> {
        self.reports.lock().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::message::DecisionRelayed;
    use crate::clock::{ScriptedClock, Timestamp};
    use crate::model::{Decision, SubmissionState};
    use serde_json::json;

    /// Fails the first `drops` sends, then answers with `status`.
    struct Flaky {
        drops: Mutex<u32>,
        status: u16,
        sent: Mutex<u32>,
    }

    impl Transport for Flaky {
        fn send(&self, _: &BridgeRequest) -> std::result::Result<BridgeResponse, TransportFailure> {
            *self.sent.lock() += 1;
            let mut drops = self.drops.lock();
            if *drops > 0 {
                *drops -= 1;
                return Err(TransportFailure("connection reset".into()));
            }
            let body = if self.status < 300 {
                json!({"duplicate": false, "result": {"ok": true}})
            } else {
                json!({"error": "BadSignature", "message": "nope"})
            };
            Ok(BridgeResponse { status: self.status, body })
        }
    }

    fn signed() -> BridgeMessage {
        let m = BridgeMessage::new(
            MessageKind::DecisionRelayed,
            &DecisionRelayed {
                submission_id: "sub-1".into(),
                document_id: "doc-1".into(),
                round_index: 1,
                decision: Decision::Accept,
                state: SubmissionState::Accepted,
            },
            Timestamp(0),
        )
        .unwrap();
        sign_message(b"k", &m).unwrap()
    }

    fn flaky(drops: u32, status: u16) -> Flaky {
        Flaky { drops: Mutex::new(drops), status, sent: Mutex::new(0) }
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let ms: Vec<u128> = (1..=9).map(|n| p.backoff_after(n).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 800, 1600, 3200, 6400, 10_000, 10_000]);
    }

    #[test]
    fn succeeds_on_third_attempt() {
        let clock = ScriptedClock::with_tick(Timestamp(0), 0);
        let t = flaky(2, 200);
        let report = deliver(&signed(), &t, &RetryPolicy::default(), &clock).unwrap();
        assert_eq!(report.attempts, 3);
        assert!(!report.duplicate);
        assert_eq!(clock.peek(), Timestamp(300));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let clock = ScriptedClock::with_tick(Timestamp(0), 0);
        let t = flaky(0, 401);
        let err = deliver(&signed(), &t, &RetryPolicy::default(), &clock).unwrap_err();
        match err {
            Error::ProtocolError { status, class, .. } => {
                assert_eq!(status, 401);
                assert_eq!(class, "BadSignature");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(*t.sent.lock(), 1);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let clock = ScriptedClock::with_tick(Timestamp(0), 0);
        let t = flaky(100, 200);
        let err = deliver(&signed(), &t, &RetryPolicy::default(), &clock).unwrap_err();
        assert_eq!(err.class(), "DeliveryExhausted");
        assert_eq!(*t.sent.lock(), 5);
        assert_eq!(clock.peek(), Timestamp(100 + 200 + 400 + 800));
    }

    #[test]
    fn unsigned_messages_are_refused() {
        let clock = ScriptedClock::default();
        let mut m = signed();
        m.signature = None;
        assert!(deliver(&m, &flaky(0, 200), &RetryPolicy::default(), &clock).is_err());
    }
}
