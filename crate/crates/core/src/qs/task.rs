//! Builders for the two generation tasks.
//!
//! Hierarchy generation takes the aligned document sections plus the root
//! question and targets the rooted linearization. Child-question generation
//! takes a parent pair plus the sections and targets the concatenation of the
//! parent's child questions.

use serde::{Deserialize, Serialize};

use super::{linearize, HierarchyMode, QsHierarchy, QsNode, QS_SEP};
use crate::doc::StructureTree;
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskKind {
    QsGenHier,
    /// `parent` is a path of child indices from the root list, e.g. `[0, 1]`
    /// is the second child of the first root.
    QsGenChildQ { parent: Vec<usize> },
}

/// One training/decoding sample: source tokens with their covering tree, and
/// the target token sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSample {
    pub source_tokens: Vec<String>,
    pub tree: StructureTree,
    pub target_tokens: Vec<String>,
}

fn resolve<'a>(h: &'a QsHierarchy, path: &[usize]) -> Result<&'a QsNode> {
    let (&first, rest) = path
        .split_first()
        .ok_or_else(|| Error::Config("empty parent path".into()))?;
    let mut node = h
        .roots
        .get(first)
        .ok_or_else(|| Error::Config(format!("no root at index {first}")))?;
    for &idx in rest {
        node = node
            .children
            .get(idx)
            .ok_or_else(|| Error::Config(format!("no child at index {idx}")))?;
    }
    Ok(node)
}

/// Encode a task sample. The task prefix (root question, or parent pair) is
/// prepended to the section tokens and owned by the virtual root.
///
/// `strict` controls the child-question task only: a parent without children
/// is an error under strict, and yields an empty target otherwise.
pub fn encode_task(
    tree: &StructureTree,
    h: &QsHierarchy,
    task: &TaskKind,
    strict: bool,
) -> Result<TaskSample> {
    match task {
        TaskKind::QsGenHier => {
            let root = h
                .roots
                .first()
                .ok_or_else(|| Error::Config("hierarchy has no roots".into()))?;
            let prefix = tokenize(&root.question);
            let prefixed = tree.with_prefix_tokens(&prefix);
            let rooted = QsHierarchy { roots: h.roots.clone(), mode: HierarchyMode::Rooted };
            Ok(TaskSample {
                source_tokens: prefixed.tokens().to_vec(),
                tree: prefixed,
                target_tokens: linearize(&rooted),
            })
        }
        TaskKind::QsGenChildQ { parent } => {
            let node = resolve(h, parent)?;
            if node.children.is_empty() && strict {
                return Err(Error::Config(format!(
                    "parent at path {parent:?} has no children"
                )));
            }
            let mut prefix = tokenize(&node.question);
            prefix.push(QS_SEP.to_string());
            prefix.extend(tokenize(&node.summary));
            let prefixed = tree.with_prefix_tokens(&prefix);
            let mut target = Vec::new();
            for child in &node.children {
                target.extend(tokenize(&child.question));
            }
            Ok(TaskSample {
                source_tokens: prefixed.tokens().to_vec(),
                tree: prefixed,
                target_tokens: target,
            })
        }
    }
}

/// All child-question samples a hierarchy yields: one per pair that has
/// children, in depth-first order.
pub fn child_q_samples(tree: &StructureTree, h: &QsHierarchy) -> Result<Vec<TaskSample>> {
    let mut paths = Vec::new();
    fn walk(node: &QsNode, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !node.children.is_empty() {
            out.push(path.clone());
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            walk(child, path, out);
            path.pop();
        }
    }
    for (i, root) in h.roots.iter().enumerate() {
        let mut path = vec![i];
        walk(root, &mut path, &mut paths);
    }
    paths
        .into_iter()
        .map(|parent| encode_task(tree, h, &TaskKind::QsGenChildQ { parent }, true))
        .collect()
}
