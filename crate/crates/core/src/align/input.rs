//! Reduce a document to the sections backing an aligned summary: matched
//! sections keep their full text, every ancestor contributes a title-only
//! stub, everything else is dropped. Levels and document order carry over,
//! so tree positions between retained sections agree with the full tree.

use std::collections::HashSet;

use crate::doc::{DocumentRecord, SectionRecord, StructureTree};
use crate::error::Result;

/// Build the reduced input tree from aligned global paragraph ids (indices
/// into [`StructureTree::paragraphs`]).
pub fn build_task_input(tree: &StructureTree, aligned_paragraphs: &[usize]) -> Result<StructureTree> {
    let paragraphs = tree.paragraphs();
    let mut matched: HashSet<usize> = HashSet::new();
    for &pid in aligned_paragraphs {
        let (owner, _) = paragraphs
            .get(pid)
            .copied()
            .ok_or(crate::error::Error::TokenOutOfRange { index: pid, len: paragraphs.len() })?;
        matched.insert(owner);
    }
    // Ancestor closure.
    let mut retained = matched.clone();
    for &id in &matched {
        let mut cur = tree.node(id)?.parent;
        while let Some(p) = cur {
            retained.insert(p);
            cur = tree.node(p)?.parent;
        }
    }

    fn collect(
        tree: &StructureTree,
        id: usize,
        retained: &HashSet<usize>,
        matched: &HashSet<usize>,
    ) -> Vec<SectionRecord> {
        let mut out = Vec::new();
        for &child in &tree.nodes()[id].children {
            if !retained.contains(&child) {
                continue;
            }
            let node = &tree.nodes()[child];
            out.push(SectionRecord {
                title: node.title.clone(),
                paragraphs: if matched.contains(&child) {
                    node.paragraphs.clone()
                } else {
                    Vec::new()
                },
                subsections: collect(tree, child, retained, matched),
            });
        }
        out
    }

    let root = &tree.nodes()[0];
    let record = DocumentRecord {
        title: root.title.clone(),
        front: if matched.contains(&0) { root.paragraphs.clone() } else { Vec::new() },
        sections: collect(tree, 0, &retained, &matched),
    };
    Ok(StructureTree::from_record(&record))
}
