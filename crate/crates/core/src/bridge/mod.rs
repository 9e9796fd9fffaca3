//! The signed, idempotent protocol the two services speak to each other.
//!
//! A message travels as the canonical JSON of
//! `{idempotency_key, issued_at, kind, payload}`; that exact byte string is
//! what gets signed and what receivers hash-check. Signature and key also
//! travel in the `X-Bridge-Signature` and `X-Bridge-Idempotency-Key` headers.

mod delivery;
mod inbox;
mod loopback;
mod message;
mod signing;
mod sso;

pub use delivery::{
    deliver, Ack, BridgeRequest, BridgeResponse, Courier, DeliveryReport, RetryPolicy, Transport,
    TransportFailure,
};
pub use inbox::Inbox;
pub use loopback::{respond, BridgeReceiver, Loopback};
pub use message::{
    idempotency_key, BridgeMessage, DecisionRelayed, Endpoint, MessageKind, Resubmission,
    ReviewerAssigned, SubmitDocument,
};
pub use signing::{sign_body, sign_message, verify_body, verify_message};
pub use sso::{make_sso_token, SsoClaims, SsoToken, DEFAULT_SSO_TTL};

pub const SIGNATURE_HEADER: &str = "X-Bridge-Signature";
pub const IDEMPOTENCY_HEADER: &str = "X-Bridge-Idempotency-Key";
