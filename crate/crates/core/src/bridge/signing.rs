use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use super::message::BridgeMessage;
use crate::error::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

fn mac(secret: &[u8]) -> Result<HmacSha256> {
    if secret.is_empty() {
        return Err(Error::EmptySecret);
    }
    Ok(HmacSha256::new_from_slice(secret).expect("HMAC accepts keys of any length"))
}

/// Hex HMAC-SHA-256 of `body`.
pub fn sign_body(secret: &[u8], body: &[u8]) -> Result<String> {
    let mut m = mac(secret)?;
    m.update(body);
    Ok(hex::encode(m.finalize().into_bytes()))
}

/// Constant-time check of a hex signature. Malformed or upper-case hex never
/// verifies, so every signature has exactly one accepted spelling.
pub fn verify_body(secret: &[u8], body: &[u8], signature_hex: &str) -> bool {
    if signature_hex.bytes().any(|b| b.is_ascii_uppercase()) {
        return false;
    }
    let Ok(sig) = hex::decode(signature_hex) else {
        return false;
    };
    let Ok(mut m) = mac(secret) else {
        return false;
    };
    m.update(body);
    m.verify_slice(&sig).is_ok()
}

pub fn sign_message(secret: &[u8], message: &BridgeMessage) -> Result<BridgeMessage> {
    let signature = sign_body(secret, &message.body_bytes())?;
    Ok(BridgeMessage {
        signature: Some(signature),
        ..message.clone()
    })
}

pub fn verify_message(secret: &[u8], message: &BridgeMessage) -> bool {
    match &message.signature {
        Some(sig) => verify_body(secret, &message.body_bytes(), sig),
        None => false,
    }
}
