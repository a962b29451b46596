//! Summary-paragraph selection filters, applied in order: enough document
//! sections, enough paragraphs per section, enough summary paragraphs, then
//! per-paragraph sentence count, word count, and abstractiveness (normalized
//! extractive-fragment density below the threshold).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::density::extractive_density;
use crate::doc::{DocumentRecord, SectionRecord, StructureTree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub min_sentences: usize,
    pub min_words: usize,
    pub max_normalized_density: f64,
    pub min_doc_sections: usize,
    pub min_avg_paragraphs_per_section: f64,
    pub min_summary_paragraphs: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_sentences: 3,
            min_words: 70,
            max_normalized_density: 0.15,
            min_doc_sections: 3,
            min_avg_paragraphs_per_section: 5.0,
            min_summary_paragraphs: 3,
        }
    }
}

/// A document plus its summary, each summary paragraph pre-split into
/// sentences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(flatten)]
    pub doc: DocumentRecord,
    #[serde(default)]
    pub summary_paragraphs: Vec<Vec<String>>,
}

impl CorpusRecord {
    pub fn from_json(json: &str) -> Result<CorpusRecord> {
        let doc = DocumentRecord::from_json(json)?;
        let value: Value = serde_json::from_str(json)?;
        let mut summary_paragraphs = Vec::new();
        if let Some(list) = value.get("summary_paragraphs") {
            let paras = list.as_array().ok_or_else(|| Error::Parse {
                path: "summary_paragraphs".into(),
                message: "expected a list of sentence lists".into(),
            })?;
            for (i, para) in paras.iter().enumerate() {
                let sents = para.as_array().ok_or_else(|| Error::Parse {
                    path: format!("summary_paragraphs[{i}]"),
                    message: "expected a list of sentences".into(),
                })?;
                let mut out = Vec::with_capacity(sents.len());
                for (j, s) in sents.iter().enumerate() {
                    out.push(
                        s.as_str()
                            .ok_or_else(|| Error::Parse {
                                path: format!("summary_paragraphs[{i}][{j}]"),
                                message: "expected a string".into(),
                            })?
                            .to_string(),
                    );
                }
                summary_paragraphs.push(out);
            }
        }
        Ok(CorpusRecord { doc, summary_paragraphs })
    }
}

/// Why a summary paragraph was kept or discarded; the first failing filter
/// in application order wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOutcome {
    Accepted,
    TooFewDocSections,
    TooFewParagraphsPerSection,
    TooFewSummaryParagraphs,
    TooFewSentences,
    TooFewWords,
    TooDense,
}

impl FilterOutcome {
    pub const ALL: [FilterOutcome; 7] = [
        FilterOutcome::Accepted,
        FilterOutcome::TooFewDocSections,
        FilterOutcome::TooFewParagraphsPerSection,
        FilterOutcome::TooFewSummaryParagraphs,
        FilterOutcome::TooFewSentences,
        FilterOutcome::TooFewWords,
        FilterOutcome::TooDense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterOutcome::Accepted => "accepted",
            FilterOutcome::TooFewDocSections => "too_few_doc_sections",
            FilterOutcome::TooFewParagraphsPerSection => "too_few_paragraphs_per_section",
            FilterOutcome::TooFewSummaryParagraphs => "too_few_summary_paragraphs",
            FilterOutcome::TooFewSentences => "too_few_sentences",
            FilterOutcome::TooFewWords => "too_few_words",
            FilterOutcome::TooDense => "too_dense",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    /// (document index, summary paragraph index) of accepted paragraphs.
    pub accepted: Vec<(usize, usize)>,
    /// Outcome of every summary paragraph, per document.
    pub outcomes: Vec<Vec<FilterOutcome>>,
    /// Histogram over outcomes.
    pub histogram: Vec<(FilterOutcome, usize)>,
}

impl SelectionReport {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("outcome,count\n");
        for (outcome, count) in &self.histogram {
            out.push_str(&format!("{},{}\n", outcome.name(), count));
        }
        out
    }
}

fn count_sections(sections: &[SectionRecord]) -> usize {
    sections
        .iter()
        .map(|s| 1 + count_sections(&s.subsections))
        .sum()
}

fn count_section_paragraphs(sections: &[SectionRecord]) -> usize {
    sections
        .iter()
        .map(|s| s.paragraphs.len() + count_section_paragraphs(&s.subsections))
        .sum()
}

fn word_count(sentences: &[String]) -> usize {
    sentences.iter().map(|s| s.split_whitespace().count()).sum()
}

/// Apply the selection filters to a corpus and report per-paragraph
/// outcomes.
pub fn select_paragraphs(corpus: &[CorpusRecord], cfg: &SelectionConfig) -> SelectionReport {
    let mut accepted = Vec::new();
    let mut outcomes = Vec::with_capacity(corpus.len());
    for (doc_idx, record) in corpus.iter().enumerate() {
        let n_sections = count_sections(&record.doc.sections);
        let doc_outcome = if n_sections < cfg.min_doc_sections {
            Some(FilterOutcome::TooFewDocSections)
        } else if (count_section_paragraphs(&record.doc.sections) as f64)
            < cfg.min_avg_paragraphs_per_section * n_sections as f64
        {
            Some(FilterOutcome::TooFewParagraphsPerSection)
        } else if record.summary_paragraphs.len() < cfg.min_summary_paragraphs {
            Some(FilterOutcome::TooFewSummaryParagraphs)
        } else {
            None
        };

        let doc_text = StructureTree::from_record(&record.doc).tokens().join(" ");
        let mut per_doc = Vec::with_capacity(record.summary_paragraphs.len());
        for (para_idx, sentences) in record.summary_paragraphs.iter().enumerate() {
            let outcome = if let Some(o) = doc_outcome {
                o
            } else if sentences.len() < cfg.min_sentences {
                FilterOutcome::TooFewSentences
            } else if word_count(sentences) < cfg.min_words {
                FilterOutcome::TooFewWords
            } else {
                let para_text = sentences.join(" ");
                let scores = extractive_density(&para_text, &doc_text);
                if scores.normalized_density < cfg.max_normalized_density {
                    FilterOutcome::Accepted
                } else {
                    FilterOutcome::TooDense
                }
            };
            if outcome == FilterOutcome::Accepted {
                accepted.push((doc_idx, para_idx));
            }
            per_doc.push(outcome);
        }
        outcomes.push(per_doc);
    }
    let histogram = FilterOutcome::ALL
        .iter()
        .map(|o| {
            let count = outcomes
                .iter()
                .flat_map(|v| v.iter())
                .filter(|x| *x == o)
                .count();
            (*o, count)
        })
        .collect();
    SelectionReport { accepted, outcomes, histogram }
}
