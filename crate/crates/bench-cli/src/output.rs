//! Deterministic CSV and sidecar-metadata output.
//!
//! Numbers are written in Rust's shortest round-trip float formatting,
//! which is platform- and thread-count-independent: reruns with the same
//! config and seed produce byte-identical files.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

/// Header comment carrying the schema version.
pub const CSV_SCHEMA_VERSION: &str = "flatrank-csv-v1";

/// Canonical float formatting for CSV cells.
pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x}")
    }
}

/// Render a CSV document: schema line, header row, then data rows.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(CSV_SCHEMA_VERSION);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Write the sidecar `<out>.meta.json` recording the exact configuration.
pub fn write_sidecar<C: Serialize>(out_path: &Path, command: &str, config: &C) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Sidecar<'a, C: Serialize> {
        command: &'a str,
        version: &'a str,
        schema: &'a str,
        config: &'a C,
    }
    let sidecar = Sidecar {
        command,
        version: env!("CARGO_PKG_VERSION"),
        schema: CSV_SCHEMA_VERSION,
        config,
    };
    let mut path = out_path.as_os_str().to_owned();
    path.push(".meta.json");
    write_text(
        Path::new(&path),
        &serde_json::to_string_pretty(&sidecar).context("serializing sidecar")?,
    )
}
