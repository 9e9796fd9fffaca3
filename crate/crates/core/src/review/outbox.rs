use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::ids::MessageId;
use crate::model::Email;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutboxKind {
    ReviewerInvited,
    FeedbackToAuthors,
    DecisionNotice,
}

/// An email that would have been sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxMessage {
    pub message_id: MessageId,
    pub recipient_email: Email,
    pub subject: String,
    pub body: String,
    pub created_at: Timestamp,
    pub kind: OutboxKind,
}

/// Append-only mail log with a read cursor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outbox {
    messages: Vec<OutboxMessage>,
    drained: usize,
}

impl Outbox {
    pub fn push(&mut self, message: OutboxMessage) {
        self.messages.push(message);
    }

    /// Pending messages in creation order; they are marked read.
    pub fn drain(&mut self) -> Vec<OutboxMessage> {
        let pending = self.messages[self.drained..].to_vec();
        self.drained = self.messages.len();
        pending
    }

    pub fn history(&self) -> &[OutboxMessage] {
        &self.messages
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(n: u64) -> OutboxMessage {
        OutboxMessage {
            message_id: MessageId(format!("msg-{n}")),
            recipient_email: Email::parse("a@x.org").unwrap(),
            subject: format!("s{n}"),
            body: String::new(),
            created_at: Timestamp(n),
            kind: OutboxKind::DecisionNotice,
        }
    }

    #[test]
    fn drain_marks_read_and_keeps_history() {
        let mut o = Outbox::default();
        assert!(o.drain().is_empty());
        o.push(msg(1));
        o.push(msg(2));
        assert_eq!(o.drain().len(), 2);
        assert!(o.drain().is_empty());
        o.push(msg(3));
        let d = o.drain();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].subject, "s3");
        assert_eq!(o.history().len(), 3);
    }
}
