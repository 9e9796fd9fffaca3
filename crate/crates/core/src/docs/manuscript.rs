use serde::{Deserialize, Serialize};

use crate::canonical::{Block, CanonicalManuscript};
use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::ids::{BlockId, CommentId, DocumentId, UserId};
use crate::model::RoleKind;
use crate::permissions::{Audience, VisibilityState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manuscript {
    pub document_id: DocumentId,
    pub title: String,
    pub blocks: Vec<Block>,
    pub revision: u64,
    pub owner: UserId,
}

impl Manuscript {
    pub fn canonical(&self) -> CanonicalManuscript {
        CanonicalManuscript {
            title: self.title.clone(),
            revision: self.revision,
            blocks: self.blocks.clone(),
        }
    }

    pub fn block(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.iter().find(|b| &b.id == id)
    }

    fn position(&self, id: &BlockId) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| &b.id == id)
            .ok_or_else(|| Error::InvalidBlock(format!("no block {id}")))
    }

    /// Applies `ops` in order to a copy; either all succeed or the
    /// manuscript is left untouched. Does not bump the revision.
    pub fn with_ops(&self, ops: &[BlockOp]) -> Result<Manuscript> {
        let mut next = self.clone();
        for op in ops {
            match op {
                BlockOp::Insert { at, block } => {
                    block.validate()?;
                    if next.block(&block.id).is_some() {
                        return Err(Error::InvalidBlock(format!("duplicate block id {}", block.id)));
                    }
                    let at = at.unwrap_or(next.blocks.len());
                    if at > next.blocks.len() {
                        return Err(Error::InvalidBlock(format!("insert position {at} out of range")));
                    }
                    next.blocks.insert(at, block.clone());
                }
                BlockOp::Replace { block } => {
                    block.validate()?;
                    let i = next.position(&block.id)?;
                    next.blocks[i] = block.clone();
                }
                BlockOp::Delete { block_id } => {
                    let i = next.position(block_id)?;
                    next.blocks.remove(i);
                }
            }
        }
        Ok(next)
    }
}

/// One step of an edit. `Replace` keeps the block id and swaps kind and text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BlockOp {
    Insert {
        #[serde(default)]
        at: Option<usize>,
        block: Block,
    },
    Replace {
        block: Block,
    },
    Delete {
        block_id: BlockId,
    },
}

/// Character range `[start, end)` inside one block's text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub block_id: BlockId,
    pub start: usize,
    pub end: usize,
}

impl Anchor {
    pub fn check(&self, manuscript: &Manuscript) -> Result<()> {
        let block = manuscript
            .block(&self.block_id)
            .ok_or_else(|| Error::BadAnchor(format!("no block {}", self.block_id)))?;
        if !self.fits(block) {
            return Err(Error::BadAnchor(format!(
                "range {}..{} outside block of {} characters",
                self.start,
                self.end,
                block.text.chars().count()
            )));
        }
        Ok(())
    }

    fn fits(&self, block: &Block) -> bool {
        self.start <= self.end && self.end <= block.text.chars().count()
    }

    /// Whether the anchor still lands inside `manuscript`.
    pub fn resolves(&self, manuscript: &Manuscript) -> bool {
        manuscript.block(&self.block_id).is_some_and(|b| self.fits(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: CommentId,
    pub document_id: DocumentId,
    pub anchor: Anchor,
    pub author_id: UserId,
    pub author_role_at_creation: RoleKind,
    pub body: String,
    pub visibility: VisibilityState,
    /// Set for editor comments only.
    pub audience: Option<Audience>,
    pub created_at: Timestamp,
    /// The anchored text no longer exists; the comment is kept and flagged.
    #[serde(default)]
    pub orphaned: bool,
}
