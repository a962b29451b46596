//! The document file format and its validating parser.
//!
//! Format (JSON, recursive):
//! `{"title": str, "front": [str], "sections": [{"title": str,
//! "paragraphs": [str], "subsections": [...]}]}`
//!
//! Parsing reports the path to the offending element, e.g.
//! `sections[0].subsections[2].title`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub title: String,
    #[serde(default)]
    pub front: Vec<String>,
    #[serde(default)]
    pub sections: Vec<SectionRecord>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SectionRecord {
    pub title: String,
    #[serde(default)]
    pub paragraphs: Vec<String>,
    #[serde(default)]
    pub subsections: Vec<SectionRecord>,
}

impl DocumentRecord {
    /// Parse and validate a document from JSON text.
    pub fn from_json(json: &str) -> Result<DocumentRecord> {
        let value: Value = serde_json::from_str(json)?;
        let obj = as_object(&value, "document")?;
        let title = required_string(obj, "title", "document")?;
        let front = optional_string_list(obj, "front", "document")?;
        let mut sections = Vec::new();
        if let Some(list) = obj.get("sections") {
            let items = as_array(list, "sections")?;
            for (i, item) in items.iter().enumerate() {
                sections.push(parse_section(item, &format!("sections[{i}]"))?);
            }
        }
        Ok(DocumentRecord { title, front, sections })
    }
}

fn parse_section(value: &Value, path: &str) -> Result<SectionRecord> {
    let obj = as_object(value, path)?;
    let title = required_string(obj, "title", path)?;
    let paragraphs = optional_string_list(obj, "paragraphs", path)?;
    let mut subsections = Vec::new();
    if let Some(list) = obj.get("subsections") {
        let subpath = format!("{path}.subsections");
        let items = as_array(list, &subpath)?;
        for (i, item) in items.iter().enumerate() {
            subsections.push(parse_section(item, &format!("{subpath}[{i}]"))?);
        }
    }
    Ok(SectionRecord { title, paragraphs, subsections })
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>> {
    value.as_object().ok_or_else(|| Error::Parse {
        path: path.into(),
        message: "expected an object".into(),
    })
}

fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::Parse {
        path: path.into(),
        message: "expected a list".into(),
    })
}

fn required_string(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Parse {
            path: format!("{path}.{key}"),
            message: "expected a string".into(),
        }),
        None => Err(Error::Parse {
            path: format!("{path}.{key}"),
            message: "missing required field".into(),
        }),
    }
}

fn optional_string_list(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Vec<String>> {
    let Some(value) = obj.get(key) else {
        return Ok(Vec::new());
    };
    let items = as_array(value, &format!("{path}.{key}"))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        match item {
            Value::String(s) => out.push(s.clone()),
            _ => {
                return Err(Error::Parse {
                    path: format!("{path}.{key}[{i}]"),
                    message: "expected a string".into(),
                })
            }
        }
    }
    Ok(out)
}
