use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde_json::Value;

use super::delivery::{Ack, BridgeRequest};
use super::message::BridgeMessage;
use super::signing::verify_body;
use crate::error::{Error, Result};

/// Receiving side of the bridge: verifies signatures and remembers the
/// result of every processed idempotency key.
///
/// The key check, the handler's mutation and the key record happen under one
/// lock, so concurrent duplicates cannot both apply.
#[derive(Debug, Default)]
pub struct Inbox {
    processed: Mutex<BTreeMap<String, Value>>,
}

impl Inbox {
    pub fn restore(processed: BTreeMap<String, Value>) -> Self {
        Self {
            processed: Mutex::new(processed),
        }
    }

    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        self.processed.lock().clone()
    }

    pub fn receive<F>(&self, secret: &[u8], request: &BridgeRequest, handler: F) -> Result<Ack>
    where
        F: FnOnce(&BridgeMessage) -> Result<Value>,
    {
        if !verify_body(secret, &request.body, &request.signature) {
            return Err(Error::BadSignature);
        }
        let message = BridgeMessage::parse_body(&request.body, &request.idempotency_key)?;
        if message.kind.endpoint() != request.endpoint {
            return Err(Error::MalformedMessage(format!(
                "{} cannot be posted to {}",
                message.kind,
                request.endpoint.path()
            )));
        }
        let mut processed = self.processed.lock();
        if let Some(result) = processed.get(&message.idempotency_key) {
            return Ok(Ack {
                duplicate: true,
                result: result.clone(),
            });
        }
        let result = handler(&message)?;
        processed.insert(message.idempotency_key.clone(), result.clone());
        Ok(Ack {
            duplicate: false,
            result,
        })
    }
}
