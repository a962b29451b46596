//! Shared file helpers: manifest-first writes and JSONL records.

use std::path::{Path, PathBuf};

use serde::Serialize;

/// Write the run manifest before any output file.
pub fn write_manifest<A: Serialize>(
    out_dir: &Path,
    command: &str,
    args: &A,
) -> anyhow::Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "args": args,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn write_output(out_dir: &Path, name: &str, content: &str) -> anyhow::Result<PathBuf> {
    let path = out_dir.join(name);
    std::fs::write(&path, content)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(
    out_dir: &Path,
    name: &str,
    items: &[T],
) -> anyhow::Result<PathBuf> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    write_output(out_dir, name, &text)
}
