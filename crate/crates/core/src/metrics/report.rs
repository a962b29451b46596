//! Per-sample and aggregate evaluation reports.

use serde::{Deserialize, Serialize};

use super::{bleu4, edit_count, hierarchy_f1, rouge, HierScore, RougeScore, RougeVariant};
use crate::error::{Error, Result};
use crate::qs::QsHierarchy;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    pub hier: HierScore,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rougel: RougeScore,
    pub bleu4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edit_count: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub edit_capped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub hier_precision: f64,
    pub hier_recall: f64,
    pub hier_f1: f64,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rougel_f1: f64,
    pub bleu4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_edit_count: Option<f64>,
    /// Reserved for human judgments; never machine-filled.
    pub answerability: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleScores>,
    pub aggregate: Aggregate,
}

/// Concatenated summaries (depth-first) of a hierarchy.
fn all_summaries(h: &QsHierarchy) -> String {
    h.units()
        .iter()
        .map(|(_, n)| n.summary.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Concatenated questions (depth-first); empty questions (the externally
/// given root in rooted mode) are skipped.
fn all_questions(h: &QsHierarchy) -> String {
    h.units()
        .iter()
        .map(|(_, n)| n.question.as_str())
        .filter(|q| !q.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Evaluate a run of generated hierarchies against references with matching
/// sample ids. Summaries are scored with ROUGE, questions with BLEU-4, the
/// structure with hierarchy F1, and, when corrected hierarchies are supplied,
/// with the reattachment edit count. Metrics are macro-averaged.
pub fn evaluate_run(
    generated: &[(String, QsHierarchy)],
    reference: &[(String, QsHierarchy)],
    corrected: Option<&[(String, QsHierarchy)]>,
) -> Result<EvalReport> {
    let ref_by_id: std::collections::HashMap<&str, &QsHierarchy> =
        reference.iter().map(|(id, h)| (id.as_str(), h)).collect();
    let corrected_by_id: std::collections::HashMap<&str, &QsHierarchy> = corrected
        .unwrap_or(&[])
        .iter()
        .map(|(id, h)| (id.as_str(), h))
        .collect();

    let gen_ids: std::collections::HashSet<&str> =
        generated.iter().map(|(id, _)| id.as_str()).collect();
    if gen_ids.len() != generated.len() {
        return Err(Error::IdMismatch("duplicate generated sample id".into()));
    }
    let mut missing: Vec<&str> = gen_ids
        .iter()
        .filter(|id| !ref_by_id.contains_key(**id))
        .copied()
        .collect();
    let mut extra: Vec<&str> = ref_by_id
        .keys()
        .filter(|id| !gen_ids.contains(**id))
        .copied()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(Error::IdMismatch(format!(
            "without reference: {missing:?}; without generation: {extra:?}"
        )));
    }

    let mut samples = Vec::with_capacity(generated.len());
    for (id, gen) in generated {
        let refr = ref_by_id[id.as_str()];
        let gen_summary = all_summaries(gen);
        let ref_summary = all_summaries(refr);
        let gen_questions = all_questions(gen);
        let ref_questions = all_questions(refr);
        let (edits, edit_capped) = match corrected_by_id.get(id.as_str()) {
            Some(corr) => {
                let e = edit_count(gen, corr)?;
                (Some(e.moves), e.capped)
            }
            None => (None, false),
        };
        samples.push(SampleScores {
            id: id.clone(),
            hier: hierarchy_f1(gen, refr),
            rouge1: rouge(&gen_summary, &ref_summary, RougeVariant::R1),
            rouge2: rouge(&gen_summary, &ref_summary, RougeVariant::R2),
            rougel: rouge(&gen_summary, &ref_summary, RougeVariant::RL),
            bleu4: bleu4(&gen_questions, &ref_questions),
            edit_count: edits,
            edit_capped,
        });
    }

    let n = samples.len().max(1) as f64;
    let mean = |f: &dyn Fn(&SampleScores) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let edit_counts: Vec<usize> = samples.iter().filter_map(|s| s.edit_count).collect();
    let aggregate = Aggregate {
        hier_precision: mean(&|s| s.hier.precision),
        hier_recall: mean(&|s| s.hier.recall),
        hier_f1: mean(&|s| s.hier.f1),
        rouge1_f1: mean(&|s| s.rouge1.f1),
        rouge2_f1: mean(&|s| s.rouge2.f1),
        rougel_f1: mean(&|s| s.rougel.f1),
        bleu4: mean(&|s| s.bleu4),
        mean_edit_count: (!edit_counts.is_empty())
            .then(|| edit_counts.iter().sum::<usize>() as f64 / edit_counts.len() as f64),
        answerability: None,
    };
    Ok(EvalReport { samples, aggregate })
}

impl EvalReport {
    /// Aligned plain-text table, one row per sample plus the mean row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header = format!(
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}\n",
            "sample", "hier_p", "hier_r", "hier_f1", "r1", "r2", "rl", "b4", "edits"
        );
        out.push_str(&header);
        out.push_str(&"-".repeat(header.len() - 1));
        out.push('\n');
        for s in &self.samples {
            let edits = match s.edit_count {
                Some(e) if s.edit_capped => format!(">={e}"),
                Some(e) => e.to_string(),
                None => "-".into(),
            };
            out.push_str(&format!(
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6}\n",
                s.id,
                s.hier.precision,
                s.hier.recall,
                s.hier.f1,
                s.rouge1.f1,
                s.rouge2.f1,
                s.rougel.f1,
                s.bleu4,
                edits
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6}\n",
            "mean",
            a.hier_precision,
            a.hier_recall,
            a.hier_f1,
            a.rouge1_f1,
            a.rouge2_f1,
            a.rougel_f1,
            a.bleu4,
            a.mean_edit_count.map_or("-".into(), |e| format!("{e:.2}")),
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,hier_p,hier_r,hier_f1,r1,r2,rl,b4,edits\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.id,
                s.hier.precision,
                s.hier.recall,
                s.hier.f1,
                s.rouge1.f1,
                s.rouge2.f1,
                s.rougel.f1,
                s.bleu4,
                s.edit_count.map_or(String::new(), |e| e.to_string()),
            ));
        }
        out
    }
}
