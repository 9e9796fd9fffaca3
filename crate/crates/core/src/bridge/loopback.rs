use std::sync::{Arc, Weak};

use serde_json::json;

use super::delivery::{Ack, BridgeRequest, BridgeResponse, Transport, TransportFailure};
use crate::error::Result;

/// Anything that accepts signed bridge requests.
pub trait BridgeReceiver: Send + Sync {
    fn receive_bridge(&self, request: &BridgeRequest) -> Result<Ack>;
}

impl BridgeReceiver for crate::docs::DocService {
    fn receive_bridge(&self, request: &BridgeRequest) -> Result<Ack> {
        crate::docs::DocService::receive_bridge(self, request)
    }
}

impl BridgeReceiver for crate::review::ReviewService {
    fn receive_bridge(&self, request: &BridgeRequest) -> Result<Ack> {
        crate::review::ReviewService::receive_bridge(self, request)
    }
}

/// Turns a receiver's outcome into the response it answers with.
pub fn respond(outcome: Result<Ack>) -> BridgeResponse {
    match outcome {
        Ok(ack) => BridgeResponse {
            status: 200,
            body: serde_json::to_value(ack).expect("ack serializes"),
        },
        Err(e) => BridgeResponse {
            status: e.http_status(),
            body: json!({ "error": e.class(), "message": e.to_string() }),
        },
    }
}

/// In-process transport straight into a peer service.
pub struct Loopback {
    peer: Weak<dyn BridgeReceiver>,
}

impl Loopback {
    pub fn new(peer: &Arc<dyn BridgeReceiver>) -> Self {
        Self {
            peer: Arc::downgrade(peer),
        }
    }
}

impl Transport for Loopback {
    fn send(&self, request: &BridgeRequest) -> std::result::Result<BridgeResponse, TransportFailure> {
        let peer = self
            .peer
            .upgrade()
            .ok_or_else(|| TransportFailure("peer service is gone".into()))?;
        Ok(respond(peer.receive_bridge(request)))
    }
}
