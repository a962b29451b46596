//! Document structure trees and tree-relative positions.
//!
//! A structured document is parsed into a tree of sections rooted at a
//! virtual level-0 node that owns the document title and any front matter.
//! Node ids are assigned in pre-order, which is also document order, so the
//! token spans of the nodes partition the token sequence in id order.
//!
//! Between two sections the tree gives a signed relative position: the
//! shortest-path edge count (positive when the source section precedes the
//! target in document order) and the level difference (source depth minus
//! target depth). Looking back along a pair flips both signs.

mod record;
pub mod synth;

pub use record::{DocumentRecord, SectionRecord};

use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::text::tokenize;

/// One section of a document, including the virtual root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionNode {
    /// Pre-order index; the virtual root is 0.
    pub id: usize,
    pub title: String,
    /// Depth in the tree; the virtual root is level 0, top-level sections 1.
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub paragraphs: Vec<String>,
    /// Half-open range of token indices owned by this section (title tokens
    /// included, children's tokens excluded).
    pub token_span: Range<usize>,
}

/// A parsed document: section tree plus its token sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureTree {
    nodes: Vec<SectionNode>,
    tokens: Vec<String>,
    token_owner: Vec<usize>,
}

/// Signed tree-relative position between two sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreePosition {
    /// Shortest-path edge count; positive when the source precedes the
    /// target in document order, zero only for a section against itself.
    pub path_len: i64,
    /// Source level minus target level.
    pub lvl_diff: i64,
}

/// Relation of an ordered section pair, most specific kind first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    #[serde(rename = "self")]
    SelfSection,
    ParentOf,
    ChildOf,
    AncestorOf,
    DescendantOf,
    SiblingBefore,
    SiblingAfter,
    NeighborBefore,
    NeighborAfter,
    SameTopLevel,
    Other,
}

impl RelationKind {
    pub const ALL: [RelationKind; 11] = [
        RelationKind::SelfSection,
        RelationKind::ParentOf,
        RelationKind::ChildOf,
        RelationKind::AncestorOf,
        RelationKind::DescendantOf,
        RelationKind::SiblingBefore,
        RelationKind::SiblingAfter,
        RelationKind::NeighborBefore,
        RelationKind::NeighborAfter,
        RelationKind::SameTopLevel,
        RelationKind::Other,
    ];

    /// The kind observed when source and target are swapped.
    pub fn mirrored(self) -> RelationKind {
        match self {
            RelationKind::ParentOf => RelationKind::ChildOf,
            RelationKind::ChildOf => RelationKind::ParentOf,
            RelationKind::AncestorOf => RelationKind::DescendantOf,
            RelationKind::DescendantOf => RelationKind::AncestorOf,
            RelationKind::SiblingBefore => RelationKind::SiblingAfter,
            RelationKind::SiblingAfter => RelationKind::SiblingBefore,
            RelationKind::NeighborBefore => RelationKind::NeighborAfter,
            RelationKind::NeighborAfter => RelationKind::NeighborBefore,
            other => other,
        }
    }

    /// Relations kept by the selected-relation bias variant; everything but
    /// `Other`.
    pub fn is_selected(self) -> bool {
        !matches!(self, RelationKind::Other)
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::SelfSection => "self",
            RelationKind::ParentOf => "parent_of",
            RelationKind::ChildOf => "child_of",
            RelationKind::AncestorOf => "ancestor_of",
            RelationKind::DescendantOf => "descendant_of",
            RelationKind::SiblingBefore => "sibling_before",
            RelationKind::SiblingAfter => "sibling_after",
            RelationKind::NeighborBefore => "neighbor_before",
            RelationKind::NeighborAfter => "neighbor_after",
            RelationKind::SameTopLevel => "same_top_level",
            RelationKind::Other => "other",
        }
    }
}

/// Section-marker insertion mode: one shared marker, or one per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerMode {
    Uniform,
    Leveled,
}

/// Relation histogram over ordered section pairs and token pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationStats {
    pub include_root: bool,
    pub section_pairs: Vec<(RelationKind, u64)>,
    pub token_pairs: Vec<(RelationKind, u64)>,
}

impl RelationStats {
    pub fn section_total(&self) -> u64 {
        self.section_pairs.iter().map(|(_, c)| c).sum()
    }

    pub fn token_total(&self) -> u64 {
        self.token_pairs.iter().map(|(_, c)| c).sum()
    }

    pub fn section_fraction(&self, kind: RelationKind) -> f64 {
        let total = self.section_total();
        if total == 0 {
            return 0.0;
        }
        let count = self
            .section_pairs
            .iter()
            .find(|(k, _)| *k == kind)
            .map_or(0, |(_, c)| *c);
        count as f64 / total as f64
    }

    /// Fraction of ordered section pairs whose relation is one of the
    /// selected kinds.
    pub fn selected_section_fraction(&self) -> f64 {
        1.0 - self.section_fraction(RelationKind::Other)
    }
}

impl StructureTree {
    /// Build the tree from a parsed document record.
    pub fn from_record(doc: &DocumentRecord) -> StructureTree {
        let mut tree = StructureTree {
            nodes: Vec::new(),
            tokens: Vec::new(),
            token_owner: Vec::new(),
        };
        let mut root_tokens = tokenize(&doc.title);
        for para in &doc.front {
            root_tokens.extend(tokenize(para));
        }
        let span_end = root_tokens.len();
        tree.push_tokens(0, root_tokens);
        tree.nodes.push(SectionNode {
            id: 0,
            title: doc.title.clone(),
            level: 0,
            parent: None,
            children: Vec::new(),
            paragraphs: doc.front.clone(),
            token_span: 0..span_end,
        });
        for section in &doc.sections {
            tree.add_section(section, 0, 1);
        }
        tree
    }

    fn add_section(&mut self, record: &SectionRecord, parent: usize, level: usize) {
        let id = self.nodes.len();
        self.nodes[parent].children.push(id);
        let mut own_tokens = tokenize(&record.title);
        for para in &record.paragraphs {
            own_tokens.extend(tokenize(para));
        }
        let start = self.tokens.len();
        let end = start + own_tokens.len();
        self.push_tokens(id, own_tokens);
        self.nodes.push(SectionNode {
            id,
            title: record.title.clone(),
            level,
            parent: Some(parent),
            children: Vec::new(),
            paragraphs: record.paragraphs.clone(),
            token_span: start..end,
        });
        for sub in &record.subsections {
            self.add_section(sub, id, level + 1);
        }
    }

    fn push_tokens(&mut self, owner: usize, tokens: Vec<String>) {
        for token in tokens {
            self.tokens.push(token);
            self.token_owner.push(owner);
        }
    }

    /// Number of sections including the virtual root.
    pub fn num_sections(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[SectionNode] {
        &self.nodes
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn node(&self, id: usize) -> Result<&SectionNode> {
        self.nodes.get(id).ok_or(Error::UnknownSection(id))
    }

    /// Owning section of a token index.
    pub fn token_owner(&self, index: usize) -> Result<usize> {
        self.token_owner
            .get(index)
            .copied()
            .ok_or(Error::TokenOutOfRange { index, len: self.token_owner.len() })
    }

    /// Signed (path length, level difference) between two sections.
    pub fn tree_position(&self, src: usize, dst: usize) -> Result<TreePosition> {
        let a = self.node(src)?;
        let b = self.node(dst)?;
        let lvl_diff = a.level as i64 - b.level as i64;
        if src == dst {
            return Ok(TreePosition { path_len: 0, lvl_diff });
        }
        let lca = self.lca(src, dst);
        let dist = (a.level + b.level - 2 * self.nodes[lca].level) as i64;
        // Pre-order ids are document order, so the sign test is an id test.
        let path_len = if src < dst { dist } else { -dist };
        Ok(TreePosition { path_len, lvl_diff })
    }

    /// Position of the owning sections of two token indices.
    pub fn token_position(&self, i: usize, j: usize) -> Result<TreePosition> {
        let src = self.token_owner(i)?;
        let dst = self.token_owner(j)?;
        self.tree_position(src, dst)
    }

    fn lca(&self, a: usize, b: usize) -> usize {
        let mut x = a;
        let mut y = b;
        while self.nodes[x].level > self.nodes[y].level {
            x = self.nodes[x].parent.expect("non-root has parent");
        }
        while self.nodes[y].level > self.nodes[x].level {
            y = self.nodes[y].parent.expect("non-root has parent");
        }
        while x != y {
            x = self.nodes[x].parent.expect("non-root has parent");
            y = self.nodes[y].parent.expect("non-root has parent");
        }
        x
    }

    fn is_strict_ancestor(&self, anc: usize, node: usize) -> bool {
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            if p == anc {
                return true;
            }
            cur = self.nodes[p].parent;
        }
        false
    }

    /// Level-1 ancestor of a section, or the section itself at level 1.
    fn top_level_ancestor(&self, id: usize) -> Option<usize> {
        let mut cur = id;
        while self.nodes[cur].level > 1 {
            cur = self.nodes[cur].parent?;
        }
        (self.nodes[cur].level == 1).then_some(cur)
    }

    /// Classify the ordered pair (src, dst); the most specific kind wins.
    pub fn classify_relation(&self, src: usize, dst: usize) -> Result<RelationKind> {
        self.node(src)?;
        self.node(dst)?;
        if src == dst {
            return Ok(RelationKind::SelfSection);
        }
        if self.nodes[dst].parent == Some(src) {
            return Ok(RelationKind::ParentOf);
        }
        if self.nodes[src].parent == Some(dst) {
            return Ok(RelationKind::ChildOf);
        }
        if self.is_strict_ancestor(src, dst) {
            return Ok(RelationKind::AncestorOf);
        }
        if self.is_strict_ancestor(dst, src) {
            return Ok(RelationKind::DescendantOf);
        }
        if self.nodes[src].parent == self.nodes[dst].parent {
            return Ok(if src < dst {
                RelationKind::SiblingBefore
            } else {
                RelationKind::SiblingAfter
            });
        }
        if src + 1 == dst {
            return Ok(RelationKind::NeighborBefore);
        }
        if dst + 1 == src {
            return Ok(RelationKind::NeighborAfter);
        }
        match (self.top_level_ancestor(src), self.top_level_ancestor(dst)) {
            (Some(a), Some(b)) if a == b => Ok(RelationKind::SameTopLevel),
            _ => Ok(RelationKind::Other),
        }
    }

    /// Histogram of relation kinds over all ordered section pairs, plus the
    /// token-pair weighted version (each section pair weighted by the product
    /// of its span sizes).
    pub fn relation_stats(&self, include_root: bool) -> Result<RelationStats> {
        let ids: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| include_root || n.id != 0)
            .map(|n| n.id)
            .collect();
        let mut section_counts = vec![0u64; RelationKind::ALL.len()];
        let mut token_counts = vec![0u64; RelationKind::ALL.len()];
        for &a in &ids {
            for &b in &ids {
                let kind = self.classify_relation(a, b)?;
                let slot = RelationKind::ALL.iter().position(|k| *k == kind).unwrap();
                section_counts[slot] += 1;
                let wa = self.nodes[a].token_span.len() as u64;
                let wb = self.nodes[b].token_span.len() as u64;
                token_counts[slot] += wa * wb;
            }
        }
        let pack = |counts: Vec<u64>| {
            RelationKind::ALL
                .iter()
                .zip(counts)
                .map(|(k, c)| (*k, c))
                .collect()
        };
        Ok(RelationStats {
            include_root,
            section_pairs: pack(section_counts),
            token_pairs: pack(token_counts),
        })
    }

    /// Insert a marker token at the start of every real section's span.
    /// Returns the marked token sequence together with a re-spanned tree.
    pub fn insert_section_tokens(&self, mode: MarkerMode) -> StructureTree {
        let mut out = self.clone();
        out.tokens.clear();
        out.token_owner.clear();
        // Spans are laid out in id order, so rebuilding in id order keeps
        // document order intact.
        for id in 0..self.nodes.len() {
            let start = out.tokens.len();
            if id != 0 {
                let marker = match mode {
                    MarkerMode::Uniform => "[SEC]".to_string(),
                    MarkerMode::Leveled => format!("[SEC-L{}]", self.nodes[id].level),
                };
                out.tokens.push(marker);
                out.token_owner.push(id);
            }
            for idx in self.nodes[id].token_span.clone() {
                out.tokens.push(self.tokens[idx].clone());
                out.token_owner.push(id);
            }
            out.nodes[id].token_span = start..out.tokens.len();
        }
        out
    }

    /// Prepend tokens owned by the virtual root (used to prefix a task
    /// question to the document sequence).
    pub fn with_prefix_tokens(&self, prefix: &[String]) -> StructureTree {
        let mut out = self.clone();
        let k = prefix.len();
        out.tokens = prefix.to_vec();
        out.tokens.extend(self.tokens.iter().cloned());
        out.token_owner = vec![0; k];
        out.token_owner.extend(self.token_owner.iter().copied());
        for node in &mut out.nodes {
            if node.id == 0 {
                node.token_span = 0..(node.token_span.end + k);
            } else {
                node.token_span = (node.token_span.start + k)..(node.token_span.end + k);
            }
        }
        out
    }

    /// All paragraphs in document order as (owning section id, text).
    /// The returned index is the global paragraph id used by alignment.
    pub fn paragraphs(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            for para in &node.paragraphs {
                out.push((node.id, para.as_str()));
            }
        }
        out
    }

    /// Check every structural invariant; used by operations that construct
    /// derived trees.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::Parse { path: "tree".into(), message: msg };
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() || self.nodes[0].level != 0 {
            return Err(fail("missing level-0 root".into()));
        }
        let mut cursor = 0usize;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(fail(format!("node {i} stores id {}", node.id)));
            }
            if let Some(p) = node.parent {
                if p >= i {
                    return Err(fail(format!("node {i} has non-preceding parent {p}")));
                }
                if self.nodes[p].level + 1 != node.level {
                    return Err(fail(format!("node {i} level is not parent level + 1")));
                }
                if !self.nodes[p].children.contains(&i) {
                    return Err(fail(format!("parent {p} does not list child {i}")));
                }
            } else if i != 0 {
                return Err(fail(format!("non-root node {i} has no parent")));
            }
            if node.token_span.start != cursor {
                return Err(fail(format!("node {i} span does not continue the sequence")));
            }
            cursor = node.token_span.end;
            for idx in node.token_span.clone() {
                if self.token_owner[idx] != i {
                    return Err(fail(format!("token {idx} not owned by its span node {i}")));
                }
            }
        }
        if cursor != self.tokens.len() || self.token_owner.len() != self.tokens.len() {
            return Err(fail("token spans do not cover the sequence".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
