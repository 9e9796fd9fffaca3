//! The authoring-side service: manuscripts as semantic blocks, revisions,
//! anchored comments, role grants and the document end of the bridge.

mod manuscript;
mod service;

pub use manuscript::{Anchor, BlockOp, Comment, Manuscript};
pub use service::{
    CommentView, DocService, DocState, DocumentListing, DocumentView, Session, Snapshot,
    SubmissionLink,
};
