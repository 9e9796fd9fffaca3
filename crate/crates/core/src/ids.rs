//! Opaque identifiers and the seeded generator that mints them.

use std::fmt;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_type!(UserId, "usr");
id_type!(DocumentId, "doc");
id_type!(SubmissionId, "sub");
id_type!(AssignmentId, "asg");
id_type!(CommentId, "cmt");
id_type!(MessageId, "msg");
id_type!(
    /// Journal ids are chosen by whoever configures the journal.
    JournalId,
    "jrn"
);
id_type!(
    /// Block ids are chosen by the client and only need to be unique within a document.
    BlockId,
    "blk"
);

/// Every prefix minted by [`IdGenerator`]; used by report normalization.
pub const GENERATED_PREFIXES: &[&str] = &[
    UserId::PREFIX,
    DocumentId::PREFIX,
    SubmissionId::PREFIX,
    AssignmentId::PREFIX,
    CommentId::PREFIX,
    MessageId::PREFIX,
    "ses",
];

/// Random id source. Seeded generators give reproducible ids for scripted runs.
#[derive(Debug)]
pub struct IdGenerator {
    rng: Mutex<ChaCha8Rng>,
}

impl IdGenerator {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn from_entropy() -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::from_os_rng()),
        }
    }

    /// `prefix-` followed by 12 lowercase hex digits.
    pub fn next(&self, prefix: &str) -> String {
        let n: u64 = self.rng.lock().random::<u64>() & 0xffff_ffff_ffff;
        format!("{prefix}-{n:012x}")
    }

    pub fn user(&self) -> UserId {
        UserId(self.next(UserId::PREFIX))
    }

    pub fn document(&self) -> DocumentId {
        DocumentId(self.next(DocumentId::PREFIX))
    }

    pub fn submission(&self) -> SubmissionId {
        SubmissionId(self.next(SubmissionId::PREFIX))
    }

    pub fn assignment(&self) -> AssignmentId {
        AssignmentId(self.next(AssignmentId::PREFIX))
    }

    pub fn comment(&self) -> CommentId {
        CommentId(self.next(CommentId::PREFIX))
    }

    pub fn message(&self) -> MessageId {
        MessageId(self.next(MessageId::PREFIX))
    }

    pub fn session(&self) -> String {
        self.next("ses")
    }

    pub fn bytes<const N: usize>(&self) -> [u8; N] {
        let mut out = [0u8; N];
        self.rng.lock().fill(&mut out[..]);
        out
    }
}
