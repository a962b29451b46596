//! Question-summary hierarchies and their level-token linearization.
//!
//! A hierarchy is a forest of question-summary pairs; each child pair follows
//! up on its parent. For sequence decoding the forest is flattened by a
//! depth-first traversal with level-change markers inserted before every pair
//! except the first: `[L_DOWN]` one level deeper, `[L_SAME]` same level, and
//! one `[L_UP]` per level climbed (a drop of k levels emits k of them, which
//! keeps the encoding invertible). Inside a pair the question and summary are
//! separated by `[QS_SEP]`.
//!
//! In rooted mode the first root's question is given externally, so the first
//! emitted unit is that root's summary alone.

mod task;

pub use task::{child_q_samples, encode_task, TaskKind, TaskSample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const L_DOWN: &str = "[L_DOWN]";
pub const L_UP: &str = "[L_UP]";
pub const L_SAME: &str = "[L_SAME]";
pub const QS_SEP: &str = "[QS_SEP]";

/// One question-summary pair and its follow-ups, in ask order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QsNode {
    pub question: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<QsNode>,
}

impl QsNode {
    pub fn new(question: &str, summary: &str) -> QsNode {
        QsNode { question: question.into(), summary: summary.into(), children: Vec::new() }
    }

    pub fn with_children(question: &str, summary: &str, children: Vec<QsNode>) -> QsNode {
        QsNode { question: question.into(), summary: summary.into(), children }
    }
}

/// Whether the first root's question is part of the hierarchy text or given
/// externally (and therefore excluded from the linearization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyMode {
    #[default]
    Full,
    Rooted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// A forest of question-summary pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QsHierarchy {
    pub roots: Vec<QsNode>,
    #[serde(default)]
    pub mode: HierarchyMode,
}

impl QsHierarchy {
    pub fn full(roots: Vec<QsNode>) -> QsHierarchy {
        QsHierarchy { roots, mode: HierarchyMode::Full }
    }

    pub fn rooted(roots: Vec<QsNode>) -> QsHierarchy {
        QsHierarchy { roots, mode: HierarchyMode::Rooted }
    }

    pub fn from_json(json: &str) -> Result<QsHierarchy> {
        Ok(serde_json::from_str(json)?)
    }

    /// Pairs in depth-first order with their depth (roots at 0).
    pub fn units(&self) -> Vec<(usize, &QsNode)> {
        let mut out = Vec::new();
        fn walk<'a>(node: &'a QsNode, depth: usize, out: &mut Vec<(usize, &'a QsNode)>) {
            out.push((depth, node));
            for child in &node.children {
                walk(child, depth + 1, out);
            }
        }
        for root in &self.roots {
            walk(root, 0, &mut out);
        }
        out
    }

    pub fn num_pairs(&self) -> usize {
        self.units().len()
    }

    /// Parent-child edges as (parent, child) indices into the depth-first
    /// pair order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        for (i, (depth, _)) in self.units().iter().enumerate() {
            stack.truncate(*depth);
            if let Some(&parent) = stack.last() {
                out.push((parent, i));
            }
            stack.push(i);
        }
        out
    }
}

/// Flatten a hierarchy to its marker token sequence. Question and summary
/// text is run through the shared tokenizer.
pub fn linearize(h: &QsHierarchy) -> Vec<String> {
    let units = h.units();
    let mut out = Vec::new();
    let mut prev_depth = 0usize;
    for (k, (depth, node)) in units.iter().enumerate() {
        if k == 0 {
            if h.mode == HierarchyMode::Rooted {
                out.extend(tokenize(&node.summary));
                prev_depth = *depth;
                continue;
            }
        } else {
            match *depth as i64 - prev_depth as i64 {
                1 => out.push(L_DOWN.to_string()),
                0 => out.push(L_SAME.to_string()),
                d if d < 0 => {
                    for _ in 0..(-d) {
                        out.push(L_UP.to_string());
                    }
                }
                _ => unreachable!("depth-first traversal steps down one level at a time"),
            }
        }
        out.extend(tokenize(&node.question));
        out.push(QS_SEP.to_string());
        out.extend(tokenize(&node.summary));
        prev_depth = *depth;
    }
    out
}

/// Parse a marker token sequence back into a hierarchy.
///
/// Strict mode accepts exactly the sequences `linearize` can produce and
/// reports the offset and reason of the first violation. Lenient mode never
/// fails: illegal level moves are clamped to the nearest legal level, pairs
/// with an empty question or summary are dropped, and stray separators are
/// ignored.
pub fn parse_linearized(
    tokens: &[String],
    hierarchy_mode: HierarchyMode,
    parse_mode: ParseMode,
) -> Result<QsHierarchy> {
    Parser {
        tokens,
        hierarchy_mode,
        strict: parse_mode == ParseMode::Strict,
    }
    .run()
}

struct Parser<'a> {
    tokens: &'a [String],
    hierarchy_mode: HierarchyMode,
    strict: bool,
}

fn is_level_marker(token: &str) -> bool {
    token == L_DOWN || token == L_UP || token == L_SAME
}

impl<'a> Parser<'a> {
    fn fail(&self, offset: usize, reason: &str) -> Error {
        Error::Linearized { offset, reason: reason.into() }
    }

    fn run(self) -> Result<QsHierarchy> {
        // Arena of parsed pairs; children/roots hold arena indices.
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut children: Vec<Vec<usize>> = Vec::new();
        let mut roots: Vec<usize> = Vec::new();
        // stack[d] = arena index of the last pair attached at depth d.
        let mut stack: Vec<usize> = Vec::new();

        let mut pos = 0usize;
        let mut first_unit = true;
        while pos < self.tokens.len() {
            let run_start = pos;
            let mut delta = 0i64;
            let mut run_kinds: Vec<&str> = Vec::new();
            while pos < self.tokens.len() && is_level_marker(&self.tokens[pos]) {
                let tok = self.tokens[pos].as_str();
                run_kinds.push(tok);
                delta += match tok {
                    L_DOWN => 1,
                    L_UP => -1,
                    _ => 0,
                };
                pos += 1;
            }
            if self.strict {
                self.check_run(&run_kinds, run_start, first_unit, stack.len())?;
            }
            if pos >= self.tokens.len() {
                if self.strict && !run_kinds.is_empty() {
                    return Err(self.fail(run_start, "level tokens at end of sequence"));
                }
                break;
            }

            // Collect the unit up to the next level marker.
            let unit_start = pos;
            let mut question: Vec<&str> = Vec::new();
            let mut summary: Vec<&str> = Vec::new();
            let mut seen_sep: Option<usize> = None;
            while pos < self.tokens.len() && !is_level_marker(&self.tokens[pos]) {
                let tok = self.tokens[pos].as_str();
                if tok == QS_SEP {
                    if seen_sep.is_some() {
                        if self.strict {
                            return Err(self.fail(pos, "duplicate [QS_SEP] in pair"));
                        }
                    } else {
                        seen_sep = Some(pos);
                    }
                } else if seen_sep.is_some() {
                    summary.push(tok);
                } else {
                    question.push(tok);
                }
                pos += 1;
            }

            let rooted_first =
                first_unit && self.hierarchy_mode == HierarchyMode::Rooted;
            if self.strict {
                if rooted_first {
                    if let Some(sep_pos) = seen_sep {
                        return Err(self.fail(sep_pos, "unexpected [QS_SEP] in the rooted summary"));
                    }
                    if question.is_empty() {
                        return Err(self.fail(unit_start, "empty root summary"));
                    }
                } else {
                    if seen_sep.is_none() {
                        return Err(self.fail(unit_start, "pair is missing [QS_SEP]"));
                    }
                    if question.is_empty() {
                        return Err(self.fail(unit_start, "empty question"));
                    }
                    if summary.is_empty() {
                        return Err(self.fail(unit_start, "empty summary"));
                    }
                }
            }

            // In the rooted first unit every token is summary text.
            let (q_text, s_text) = if rooted_first {
                let mut all = question.clone();
                all.extend(summary.iter().copied());
                (String::new(), all.join(" "))
            } else {
                (question.join(" "), summary.join(" "))
            };

            let keep = if rooted_first {
                !s_text.is_empty()
            } else {
                !q_text.is_empty() && !s_text.is_empty()
            };
            if !keep {
                // Lenient: drop the incomplete pair; the level context stays
                // where the last kept pair left it.
                first_unit = false;
                continue;
            }

            // Depth of this pair: previous depth adjusted by the marker run,
            // clamped to what the current stack can attach.
            let prev_depth = stack.len() as i64 - 1;
            let requested = if first_unit { 0 } else { prev_depth + delta };
            let depth = requested.clamp(0, stack.len() as i64) as usize;

            let id = pairs.len();
            pairs.push((q_text, s_text));
            children.push(Vec::new());
            if depth == 0 {
                roots.push(id);
            } else {
                children[stack[depth - 1]].push(id);
            }
            stack.truncate(depth);
            stack.push(id);
            first_unit = false;
        }

        if self.strict && pairs.is_empty() {
            return Err(self.fail(0, "sequence contains no pairs"));
        }

        fn build(id: usize, pairs: &[(String, String)], children: &[Vec<usize>]) -> QsNode {
            QsNode {
                question: pairs[id].0.clone(),
                summary: pairs[id].1.clone(),
                children: children[id].iter().map(|&c| build(c, pairs, children)).collect(),
            }
        }
        let roots = roots.iter().map(|&r| build(r, &pairs, &children)).collect();
        Ok(QsHierarchy { roots, mode: self.hierarchy_mode })
    }

    /// Strict grammar for a level-marker run: nothing before the first pair;
    /// afterwards exactly `[L_DOWN]`, `[L_SAME]`, or one or more `[L_UP]`
    /// that stay at or above the first level.
    fn check_run(
        &self,
        run: &[&str],
        run_start: usize,
        first_unit: bool,
        stack_len: usize,
    ) -> Result<()> {
        if run.is_empty() {
            if !first_unit {
                return Err(self.fail(run_start, "pair not separated by a level token"));
            }
            return Ok(());
        }
        if first_unit {
            return Err(self.fail(run_start, "level token before the first pair"));
        }
        let all_up = run.iter().all(|t| *t == L_UP);
        let ok = matches!(run, [t] if *t == L_DOWN || *t == L_SAME) || all_up;
        if !ok {
            return Err(self.fail(run_start, "mixed level tokens before a pair"));
        }
        if all_up && run.len() >= stack_len {
            return Err(self.fail(run_start, "level rises above the first level"));
        }
        Ok(())
    }
}
