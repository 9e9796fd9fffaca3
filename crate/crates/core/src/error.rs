use thiserror::Error;

use crate::model::RoleKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure a service operation can report. The variant name doubles as
/// the wire-level error class (see [`Error::class`]).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("illegal transition: {event} in state {state}")]
    IllegalTransition { state: String, event: String },
    #[error("review feedback must not be empty")]
    MissingFeedback,
    #[error("role {role:?} does not exist on the {side} side")]
    UnknownRole { side: &'static str, role: RoleKind },
    #[error("user already holds role {existing:?} on this document, cannot also be {requested:?}")]
    RoleConflict { existing: RoleKind, requested: RoleKind },
    #[error("no role on {0}")]
    NoGrant(String),
    #[error("only editors may do this")]
    NotEditor,
    #[error("only authors may do this")]
    NotAuthor,
    #[error("role is not allowed to edit")]
    NotAuthorized,
    #[error("title must not be empty")]
    EmptyTitle,
    #[error("stale revision: based on {base}, current is {current}")]
    StaleRevision { base: u64, current: u64 },
    #[error("bad anchor: {0}")]
    BadAnchor(String),
    #[error("parse error at byte {position}: {message}")]
    ParseError { position: usize, message: String },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("invalid email address {0:?}")]
    InvalidEmail(String),
    #[error("display name must not be empty")]
    EmptyName,
    #[error("signature did not verify")]
    BadSignature,
    #[error("token expired")]
    TokenExpired,
    #[error("token already used")]
    TokenReplayed,
    #[error("signing secret must not be empty")]
    EmptySecret,
    #[error("message is missing identifying field {0:?}")]
    MissingField(String),
    #[error("malformed bridge message: {0}")]
    MalformedMessage(String),
    #[error("delivery gave up after {attempts} attempts: {last_error}")]
    DeliveryExhausted { attempts: u32, last_error: String },
    #[error("receiver rejected message ({status} {class}): {message}")]
    ProtocolError {
        status: u16,
        class: String,
        message: String,
    },
    #[error("role {0:?} cannot be carried in a login token")]
    BadRole(RoleKind),
    #[error("unknown journal {0}")]
    UnknownJournal(String),
    #[error("reviewer {0} is already assigned in this round")]
    DuplicateReviewer(String),
    #[error("{0} is an author of this submission")]
    AuthorReviewerConflict(String),
    #[error("journal allows at most {max_rounds} review rounds")]
    RoundLimitExceeded { max_rounds: u32 },
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("not authenticated")]
    Unauthenticated,
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn not_found(kind: &'static str, id: impl ToString) -> Self {
        Error::NotFound {
            kind,
            id: id.to_string(),
        }
    }

    pub fn illegal(state: impl std::fmt::Debug, event: impl std::fmt::Debug) -> Self {
        Error::IllegalTransition {
            state: format!("{state:?}"),
            event: format!("{event:?}"),
        }
    }

    /// Stable class name, used in HTTP error bodies and scenario outcome tags.
    pub fn class(&self) -> &str {
        match self {
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::MissingFeedback => "MissingFeedback",
            Error::UnknownRole { .. } => "UnknownRole",
            Error::RoleConflict { .. } => "RoleConflict",
            Error::NoGrant(_) => "NoGrant",
            Error::NotEditor => "NotEditor",
            Error::NotAuthor => "NotAuthor",
            Error::NotAuthorized => "NotAuthorized",
            Error::EmptyTitle => "EmptyTitle",
            Error::StaleRevision { .. } => "StaleRevision",
            Error::BadAnchor(_) => "BadAnchor",
            Error::ParseError { .. } => "ParseError",
            Error::InvalidBlock(_) => "InvalidBlock",
            Error::InvalidEmail(_) => "InvalidEmail",
            Error::EmptyName => "EmptyName",
            Error::BadSignature => "BadSignature",
            Error::TokenExpired => "TokenExpired",
            Error::TokenReplayed => "TokenReplayed",
            Error::EmptySecret => "EmptySecret",
            Error::MissingField(_) => "MissingField",
            Error::MalformedMessage(_) => "MalformedMessage",
            Error::DeliveryExhausted { .. } => "DeliveryExhausted",
            Error::ProtocolError { class, .. } => class,
            Error::BadRole(_) => "BadRole",
            Error::UnknownJournal(_) => "UnknownJournal",
            Error::DuplicateReviewer(_) => "DuplicateReviewer",
            Error::AuthorReviewerConflict(_) => "AuthorReviewerConflict",
            Error::RoundLimitExceeded { .. } => "RoundLimitExceeded",
            Error::NotFound { .. } => "NotFound",
            Error::Unauthenticated => "Unauthenticated",
            Error::Invalid(_) => "Invalid",
        }
    }

    /// HTTP status a service answers with for this error.
    pub fn http_status(&self) -> u16 {
        match self {
            Error::BadSignature
            | Error::TokenExpired
            | Error::TokenReplayed
            | Error::Unauthenticated => 401,
            Error::NoGrant(_) | Error::NotEditor | Error::NotAuthor | Error::NotAuthorized => 403,
            Error::NotFound { .. } | Error::UnknownJournal(_) => 404,
            Error::IllegalTransition { .. }
            | Error::RoleConflict { .. }
            | Error::StaleRevision { .. }
            | Error::DuplicateReviewer(_)
            | Error::AuthorReviewerConflict(_)
            | Error::RoundLimitExceeded { .. } => 409,
            Error::ProtocolError { status, .. } => *status,
            Error::DeliveryExhausted { .. } => 502,
            _ => 400,
        }
    }
}
