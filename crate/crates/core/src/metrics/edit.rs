//! Minimum reattachment moves between two hierarchies over the same pairs.
//!
//! One move re-parents a single pair, descendants included, to either its
//! grandparent or to a child of its current parent (a sibling). Top-level
//! pairs hang off a dummy root, which has no grandparent. Moves are
//! reversible, so the distance is symmetric; it is found by bidirectional
//! breadth-first search over parent assignments.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qs::{QsHierarchy, QsNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCount {
    pub moves: usize,
    /// True when the search hit its state cap; `moves` is then only a lower
    /// bound on the true distance.
    pub capped: bool,
}

const DEFAULT_STATE_CAP: usize = 2_000_000;

type State = Vec<u16>;

/// Minimum number of reattachment moves turning `generated` into
/// `corrected`. Pairs are matched by their (question, summary) text, which
/// must be unique within each hierarchy and identical across the two.
pub fn edit_count(generated: &QsHierarchy, corrected: &QsHierarchy) -> Result<EditCount> {
    edit_count_capped(generated, corrected, DEFAULT_STATE_CAP)
}

pub fn edit_count_capped(
    generated: &QsHierarchy,
    corrected: &QsHierarchy,
    max_states: usize,
) -> Result<EditCount> {
    let keys = pair_keys(generated)?;
    let other_keys = pair_keys(corrected)?;
    if keys != other_keys {
        let missing = keys
            .keys()
            .find(|k| !other_keys.contains_key(*k))
            .or_else(|| other_keys.keys().find(|k| !keys.contains_key(*k)));
        return Err(Error::PairSetMismatch(format!(
            "pair {:?} present on one side only",
            missing.map(|(q, s)| format!("{q} / {s}"))
        )));
    }
    let start = parent_state(generated, &keys);
    let goal = parent_state(corrected, &keys);
    if start == goal {
        return Ok(EditCount { moves: 0, capped: false });
    }
    Ok(bidirectional_bfs(start, goal, max_states))
}

fn pair_keys(h: &QsHierarchy) -> Result<HashMap<(String, String), u16>> {
    let mut keys: Vec<(String, String)> = h
        .units()
        .iter()
        .map(|(_, n)| (n.question.clone(), n.summary.clone()))
        .collect();
    let before = keys.len();
    keys.sort();
    keys.dedup();
    if keys.len() != before {
        return Err(Error::PairSetMismatch(
            "duplicate (question, summary) pair; identity matching is ambiguous".into(),
        ));
    }
    Ok(keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, i as u16))
        .collect())
}

/// Parent vector indexed by pair id; the dummy root is id n.
fn parent_state(h: &QsHierarchy, keys: &HashMap<(String, String), u16>) -> State {
    let n = keys.len();
    let mut parents = vec![n as u16; n];
    fn walk(
        node: &QsNode,
        parent: u16,
        keys: &HashMap<(String, String), u16>,
        parents: &mut [u16],
    ) {
        let id = keys[&(node.question.clone(), node.summary.clone())];
        parents[id as usize] = parent;
        for child in &node.children {
            walk(child, id, keys, parents);
        }
    }
    for root in &h.roots {
        walk(root, n as u16, keys, &mut parents);
    }
    parents
}

fn successors(state: &State) -> Vec<State> {
    let n = state.len();
    let root = n as u16;
    let mut out = Vec::new();
    for x in 0..n {
        let p = state[x];
        // Attach to the grandparent (absent when the parent is the root).
        if p != root {
            let mut next = state.clone();
            next[x] = state[p as usize];
            out.push(next);
        }
        // Attach to a sibling (a child of the current parent).
        for y in 0..n {
            if y != x && state[y] == p {
                let mut next = state.clone();
                next[x] = y as u16;
                out.push(next);
            }
        }
    }
    out
}

fn bidirectional_bfs(start: State, goal: State, max_states: usize) -> EditCount {
    let mut visited_a: HashMap<State, usize> = HashMap::from([(start.clone(), 0)]);
    let mut visited_b: HashMap<State, usize> = HashMap::from([(goal.clone(), 0)]);
    let mut frontier_a = vec![start];
    let mut frontier_b = vec![goal];
    let mut depth_a = 0usize;
    let mut depth_b = 0usize;
    let mut best = usize::MAX;

    loop {
        // Once the best meeting cannot be beaten by deeper levels, it is the
        // exact distance.
        if best <= depth_a + depth_b + 1 {
            return EditCount { moves: best, capped: false };
        }
        if visited_a.len() + visited_b.len() > max_states {
            return EditCount { moves: depth_a + depth_b + 1, capped: true };
        }
        if frontier_a.is_empty() && frontier_b.is_empty() {
            // The move graph is connected, so this only happens after the
            // meeting has been recorded.
            return EditCount { moves: best, capped: false };
        }
        let expand_a = if frontier_a.is_empty() {
            false
        } else if frontier_b.is_empty() {
            true
        } else {
            frontier_a.len() <= frontier_b.len()
        };
        let (frontier, visited, other_visited, depth) = if expand_a {
            (&mut frontier_a, &mut visited_a, &visited_b, &mut depth_a)
        } else {
            (&mut frontier_b, &mut visited_b, &visited_a, &mut depth_b)
        };
        let mut next_frontier = Vec::new();
        for state in frontier.drain(..) {
            for succ in successors(&state) {
                if visited.contains_key(&succ) {
                    continue;
                }
                visited.insert(succ.clone(), *depth + 1);
                if let Some(e) = other_visited.get(&succ) {
                    best = best.min(*depth + 1 + e);
                }
                next_frontier.push(succ);
            }
        }
        *frontier = next_frontier;
        *depth += 1;
    }
}
