//! The editorial-side service: journals, submissions, review rounds,
//! reviewer assignment, decisions and the notification outbox.

mod outbox;
mod service;

pub use outbox::{Outbox, OutboxKind, OutboxMessage};
pub use service::{
    Journal, JournalSummary, ReviewConfig, ReviewService, ReviewSession, ReviewState, RoundView,
    Submission, SubmissionSummary, SubmissionView,
};
