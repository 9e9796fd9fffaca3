use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::signing::{sign_body, verify_body};
use crate::canonical::canonical_json;
use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::ids::DocumentId;
use crate::model::{Email, RoleKind};
use crate::permissions::{map_role, ServiceSide};

pub const DEFAULT_SSO_TTL: Duration = Duration::from_secs(24 * 60 * 60);

/// What a one-time login link asserts. `role` is always a document-side role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsoClaims {
    pub email: Email,
    pub document_id: DocumentId,
    pub role: RoleKind,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    /// 128 random bits, hex.
    pub nonce: String,
}

impl SsoClaims {
    fn canonical_bytes(&self) -> Vec<u8> {
        canonical_json(&serde_json::to_value(self).expect("claims serialize"))
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        now >= self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SsoToken {
    pub claims: SsoClaims,
    pub signature: String,
}

impl SsoToken {
    /// `base64url(canonical claims) "." hex(signature)`, safe to put in a URL.
    pub fn encode(&self) -> String {
        format!(
            "{}.{}",
            URL_SAFE_NO_PAD.encode(self.claims.canonical_bytes()),
            self.signature
        )
    }

    /// Decodes and checks the signature. Expiry and single use are the
    /// consumer's business.
    pub fn verify(secret: &[u8], encoded: &str) -> Result<SsoClaims> {
        let (claims_part, signature) = encoded.split_once('.').ok_or(Error::BadSignature)?;
        let claims_bytes = URL_SAFE_NO_PAD
            .decode(claims_part)
            .map_err(|_| Error::BadSignature)?;
        if !verify_body(secret, &claims_bytes, signature) {
            return Err(Error::BadSignature);
        }
        let claims: SsoClaims =
            serde_json::from_slice(&claims_bytes).map_err(|_| Error::BadSignature)?;
        // Claims must be in canonical form so a token has exactly one encoding.
        if claims.canonical_bytes() != claims_bytes {
            return Err(Error::BadSignature);
        }
        Ok(claims)
    }
}

/// Mints a login link for `email` on `document_id`. `role` is given as held
/// on `from`, and is mapped to the document side before it is signed in.
#[allow(clippy::too_many_arguments)]
pub fn make_sso_token(
    secret: &[u8],
    from: ServiceSide,
    email: &Email,
    document_id: &DocumentId,
    role: RoleKind,
    ttl: Duration,
    now: Timestamp,
    nonce: [u8; 16],
) -> Result<SsoToken> {
    let role = match from {
        ServiceSide::ReviewService => map_role(from, role).map_err(|_| Error::BadRole(role))?,
        ServiceSide::DocumentService if role == RoleKind::Editor => return Err(Error::BadRole(role)),
        ServiceSide::DocumentService => role,
    };
    let claims = SsoClaims {
        email: email.clone(),
        document_id: document_id.clone(),
        role,
        issued_at: now,
        expires_at: now.saturating_add(ttl),
        nonce: hex::encode(nonce),
    };
    let signature = sign_body(secret, &claims.canonical_bytes())?;
    Ok(SsoToken { claims, signature })
}
