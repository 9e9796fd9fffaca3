//! Byte-deterministic serializations.
//!
//! Two encodings live here: the manuscript interchange format (fixed key
//! order `title, revision, blocks`, blocks as `id, kind, level?, text`) and
//! the sorted-key compact JSON that bridge messages are signed over.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::BlockId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    Heading(u8),
    Paragraph,
    FigurePlaceholder,
    Table,
    Formula,
    CitationRef,
}

impl BlockKind {
    fn tag(self) -> &'static str {
        match self {
            BlockKind::Heading(_) => "heading",
            BlockKind::Paragraph => "paragraph",
            BlockKind::FigurePlaceholder => "figure",
            BlockKind::Table => "table",
            BlockKind::Formula => "formula",
            BlockKind::CitationRef => "citation",
        }
    }

    fn from_tag(tag: &str, level: Option<u8>) -> std::result::Result<BlockKind, String> {
        let kind = match (tag, level) {
            ("heading", Some(l)) => BlockKind::Heading(l),
            ("heading", None) => return Err("heading without level".into()),
            (_, Some(_)) => return Err(format!("{tag} block must not carry a level")),
            ("paragraph", None) => BlockKind::Paragraph,
            ("figure", None) => BlockKind::FigurePlaceholder,
            ("table", None) => BlockKind::Table,
            ("formula", None) => BlockKind::Formula,
            ("citation", None) => BlockKind::CitationRef,
            (other, None) => return Err(format!("unknown block kind {other:?}")),
        };
        Ok(kind)
    }
}

/// One semantic unit of a manuscript. `text` is opaque for figure placeholders.
/// Serializes in the interchange shape `{id, kind, level?, text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WireBlock", into = "WireBlock")]
pub struct Block {
    pub id: BlockId,
    pub kind: BlockKind,
    pub text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBlock {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<u8>,
    text: String,
}

impl From<Block> for WireBlock {
    fn from(b: Block) -> Self {
        let level = match b.kind {
            BlockKind::Heading(l) => Some(l),
            _ => None,
        };
        WireBlock {
            id: b.id.0,
            kind: b.kind.tag().to_string(),
            level,
            text: b.text,
        }
    }
}

impl TryFrom<WireBlock> for Block {
    type Error = Error;

    fn try_from(w: WireBlock) -> Result<Self> {
        let kind = BlockKind::from_tag(&w.kind, w.level).map_err(Error::InvalidBlock)?;
        let block = Block {
            id: BlockId(w.id),
            kind,
            text: w.text,
        };
        block.validate()?;
        Ok(block)
    }
}

impl Block {
    pub fn new(id: &str, kind: BlockKind, text: &str) -> Self {
        Self {
            id: BlockId::from(id),
            kind,
            text: text.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.as_str().is_empty() {
            return Err(Error::InvalidBlock("block id must not be empty".into()));
        }
        if let BlockKind::Heading(level) = self.kind {
            if !(1..=3).contains(&level) {
                return Err(Error::InvalidBlock(format!(
                    "heading level {level} outside 1..3"
                )));
            }
        }
        Ok(())
    }
}

/// Content of a manuscript as exchanged between services.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalManuscript {
    pub title: String,
    pub revision: u64,
    pub blocks: Vec<Block>,
}

impl CanonicalManuscript {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::with_capacity(64 + self.blocks.len() * 48);
        out.push_str("{\"title\":");
        push_json_str(&mut out, &self.title);
        out.push_str(",\"revision\":");
        out.push_str(&self.revision.to_string());
        out.push_str(",\"blocks\":[");
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str("{\"id\":");
            push_json_str(&mut out, block.id.as_str());
            out.push_str(",\"kind\":");
            push_json_str(&mut out, block.kind.tag());
            if let BlockKind::Heading(level) = block.kind {
                out.push_str(",\"level\":");
                out.push_str(&level.to_string());
            }
            out.push_str(",\"text\":");
            push_json_str(&mut out, &block.text);
            out.push('}');
        }
        out.push_str("]}");
        out.into_bytes()
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawBlock {
            id: String,
            kind: String,
            level: Option<u8>,
            text: String,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            title: String,
            revision: u64,
            blocks: Vec<RawBlock>,
        }

        let raw: Raw = serde_json::from_slice(bytes).map_err(|e| Error::ParseError {
            position: if e.is_eof() {
                bytes.len()
            } else {
                byte_offset(bytes, e.line(), e.column())
            },
            message: e.to_string(),
        })?;
        let invalid = |message: String| Error::ParseError {
            position: 0,
            message,
        };
        if raw.title.trim().is_empty() {
            return Err(invalid("title must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut blocks = Vec::with_capacity(raw.blocks.len());
        for (i, b) in raw.blocks.into_iter().enumerate() {
            let kind = BlockKind::from_tag(&b.kind, b.level)
                .map_err(|m| invalid(format!("block {i}: {m}")))?;
            let block = Block {
                id: BlockId(b.id),
                kind,
                text: b.text,
            };
            block
                .validate()
                .map_err(|e| invalid(format!("block {i}: {e}")))?;
            if !seen.insert(block.id.clone()) {
                return Err(invalid(format!("block {i}: duplicate id {}", block.id)));
            }
            blocks.push(block);
        }
        Ok(Self {
            title: raw.title,
            revision: raw.revision,
            blocks,
        })
    }
}

fn push_json_str(out: &mut String, s: &str) {
    // serde_json string escaping is deterministic
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

/// serde_json reports 1-based line and column; convert to a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compact JSON with object keys in lexicographic order at every depth.
pub fn canonical_json(value: &Value) -> Vec<u8> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled, so
    // sorting is re-applied explicitly.
    fn sorted(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut entries: Vec<_> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sorted(v))).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_vec(&sorted(value)).expect("json values always serialize")
}
