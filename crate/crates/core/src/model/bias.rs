//! Learnable attention bias tables and their position indexing.
//!
//! Every attention head owns one lookup table. The full variant is indexed
//! by the clipped (path length, level difference) between the sections of
//! two tokens; the selected variant by the relation kind (non-selected pairs
//! contribute zero and learn nothing); the linear variants by clipped token
//! or section index distance. Tables initialize to zero, so an untrained
//! biased model reproduces the unbiased one exactly.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ClipBounds;
use crate::doc::{RelationKind, StructureTree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    Full,
    Selected,
    TokenLinear,
    SectionLinear,
}

impl BiasKind {
    /// Number of entries per head.
    pub fn table_size(self, clip: &ClipBounds) -> usize {
        match self {
            BiasKind::Full => ((2 * clip.path + 1) * (2 * clip.lvl + 1)) as usize,
            BiasKind::Selected => SELECTED_KINDS.len(),
            BiasKind::TokenLinear | BiasKind::SectionLinear => (2 * clip.linear + 1) as usize,
        }
    }
}

/// Relation kinds that own a learnable slot, in slot order.
pub const SELECTED_KINDS: [RelationKind; 10] = [
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
];

/// Per-head bias lookup tables; rows are heads.
#[derive(Debug, Clone)]
pub struct BiasTable {
    pub kind: BiasKind,
    pub clip: ClipBounds,
    /// Shape (heads, table size), zero-initialized.
    pub values: Array2<f64>,
}

impl BiasTable {
    pub fn zeros(kind: BiasKind, clip: ClipBounds, heads: usize) -> BiasTable {
        BiasTable {
            kind,
            clip,
            values: Array2::zeros((heads, kind.table_size(&clip))),
        }
    }

    pub fn heads(&self) -> usize {
        self.values.nrows()
    }

    /// Slot of a clipped (path length, level difference) pair; full tables
    /// only.
    pub fn full_slot(&self, path_len: i64, lvl_diff: i64) -> usize {
        full_slot(&self.clip, path_len, lvl_diff)
    }
}

fn full_slot(clip: &ClipBounds, path_len: i64, lvl_diff: i64) -> usize {
    let p = path_len.clamp(-clip.path, clip.path) + clip.path;
    let l = lvl_diff.clamp(-clip.lvl, clip.lvl) + clip.lvl;
    (p * (2 * clip.lvl + 1) + l) as usize
}

fn linear_slot(clip: &ClipBounds, dist: i64) -> usize {
    (dist.clamp(-clip.linear, clip.linear) + clip.linear) as usize
}

fn selected_slot(kind: RelationKind) -> Option<usize> {
    SELECTED_KINDS.iter().position(|k| *k == kind)
}

/// Precomputed table slots for every ordered token pair of one source
/// sequence; `-1` marks pairs that contribute zero bias (non-selected
/// relations).
#[derive(Debug, Clone)]
pub struct PosIndex {
    pub kind: BiasKind,
    pub table_size: usize,
    /// Shape (n, n): slot of (query token i, key token j).
    pub slots: Array2<i32>,
}

/// Build the token-pair slot matrix for a sequence of length `n` covered by
/// `tree`.
pub fn build_pos_index(
    tree: &StructureTree,
    kind: BiasKind,
    clip: &ClipBounds,
    n: usize,
) -> Result<PosIndex> {
    if n > tree.num_tokens() {
        return Err(Error::Shape(format!(
            "sequence length {n} exceeds the tree's token coverage {}",
            tree.num_tokens()
        )));
    }
    let num_sections = tree.num_sections();
    // Token pairs inherit their sections' slot, so compute per section pair
    // first (token-linear distances are the exception).
    let mut section_slots = Array2::<i32>::zeros((num_sections, num_sections));
    if kind != BiasKind::TokenLinear {
        for a in 0..num_sections {
            for b in 0..num_sections {
                section_slots[[a, b]] = match kind {
                    BiasKind::Full => {
                        let pos = tree.tree_position(a, b)?;
                        full_slot(clip, pos.path_len, pos.lvl_diff) as i32
                    }
                    BiasKind::Selected => selected_slot(tree.classify_relation(a, b)?)
                        .map_or(-1, |s| s as i32),
                    BiasKind::SectionLinear => linear_slot(clip, a as i64 - b as i64) as i32,
                    BiasKind::TokenLinear => unreachable!(),
                };
            }
        }
    }
    let mut slots = Array2::<i32>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            slots[[i, j]] = if kind == BiasKind::TokenLinear {
                linear_slot(clip, i as i64 - j as i64) as i32
            } else {
                let a = tree.token_owner(i)?;
                let b = tree.token_owner(j)?;
                section_slots[[a, b]]
            };
        }
    }
    Ok(PosIndex { kind, table_size: kind.table_size(clip), slots })
}

/// Per-head encoder bias matrices: `b_h[i][j]` is head `h`'s table entry for
/// the positions of tokens `i` and `j` (zero for non-selected pairs).
pub fn bias_matrix_enc(
    tree: &StructureTree,
    table: &BiasTable,
    n: usize,
) -> Result<Vec<Array2<f64>>> {
    let index = build_pos_index(tree, table.kind, &table.clip, n)?;
    Ok(materialize_bias(&index, &table.values))
}

/// Expand a slot matrix through each head's table.
pub fn materialize_bias(index: &PosIndex, values: &Array2<f64>) -> Vec<Array2<f64>> {
    let (n, m) = index.slots.dim();
    (0..values.nrows())
        .map(|h| {
            let mut b = Array2::<f64>::zeros((n, m));
            for i in 0..n {
                for j in 0..m {
                    let slot = index.slots[[i, j]];
                    if slot >= 0 {
                        b[[i, j]] = values[[h, slot as usize]];
                    }
                }
            }
            b
        })
        .collect()
}

/// Decoder cross-attention bias for one generation step: the alignment
/// weights over input tokens, taken from the second-to-last decoder layer,
/// weight the table entries of every (input token, input token) pair.
pub fn bias_vector_dec(
    tree: &StructureTree,
    table: &BiasTable,
    head: usize,
    alignment: &[f64],
    j: usize,
) -> Result<f64> {
    let n = alignment.len();
    let index = build_pos_index(tree, table.kind, &table.clip, n)?;
    if j >= n {
        return Err(Error::TokenOutOfRange { index: j, len: n });
    }
    let mut sum = 0.0;
    for (l, a) in alignment.iter().enumerate() {
        let slot = index.slots[[l, j]];
        if slot >= 0 {
            sum += a * table.values[[head, slot as usize]];
        }
    }
    Ok(sum)
}

/// Section-by-section grid of head-averaged bias values, scaled by 100.
pub fn dump_bias_grid(table: &BiasTable, tree: &StructureTree) -> Result<Array2<f64>> {
    let n = tree.num_sections();
    let heads = table.heads() as f64;
    let mut grid = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            let slot: i32 = match table.kind {
                BiasKind::Full => {
                    let pos = tree.tree_position(a, b)?;
                    table.full_slot(pos.path_len, pos.lvl_diff) as i32
                }
                BiasKind::Selected => {
                    selected_slot(tree.classify_relation(a, b)?).map_or(-1, |s| s as i32)
                }
                BiasKind::SectionLinear => linear_slot(&table.clip, a as i64 - b as i64) as i32,
                // Token-linear tables are graphed by the distance between
                // span starts.
                BiasKind::TokenLinear => {
                    let sa = tree.node(a)?.token_span.start as i64;
                    let sb = tree.node(b)?.token_span.start as i64;
                    linear_slot(&table.clip, sa - sb) as i32
                }
            };
            if slot >= 0 {
                let mean: f64 =
                    (0..table.heads()).map(|h| table.values[[h, slot as usize]]).sum::<f64>()
                        / heads;
                grid[[a, b]] = 100.0 * mean;
            }
        }
    }
    Ok(grid)
}

/// CSV rendering of [`dump_bias_grid`] with section ids as headers.
pub fn bias_grid_csv(grid: &Array2<f64>) -> String {
    let n = grid.nrows();
    let mut out = String::from("section");
    for b in 0..n {
        out.push_str(&format!(",s{b}"));
    }
    out.push('\n');
    for a in 0..n {
        out.push_str(&format!("s{a}"));
        for b in 0..n {
            out.push_str(&format!(",{:.6}", grid[[a, b]]));
        }
        out.push('\n');
    }
    out
}
