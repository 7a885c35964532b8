//! The single serialization point for numerical output: fixed
//! 17-significant-digit decimal formatting, atomic file writes, CSV
//! emission, and content digests for provenance manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::models::ModelSpec;
use crate::twist::IndexReport;
use crate::{Result, Scalar};

/// Fixed-width decimal rendering with 17 significant digits; parses back to
/// the identical `f64` bit pattern.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV field.
#[derive(Clone, Debug)]
pub enum CsvField {
    Num(f64),
    Int(i64),
    Str(String),
}

impl CsvField {
    fn render(&self) -> String {
        match self {
            CsvField::Num(x) => fmt_g17(*x),
            CsvField::Int(i) => i.to_string(),
            CsvField::Str(s) => {
                if s.contains(',') || s.contains('"') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

fn render_csv(header: &[&str], rows: &[Vec<CsvField>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let line: Vec<String> = row.iter().map(CsvField::render).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write a UTF-8 CSV with a header row, atomically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<CsvField>]) -> Result<()> {
    write_atomic(path, render_csv(header, rows).as_bytes())
}

/// Append rows to a CSV, creating it with the header when absent.
pub fn append_csv(path: &Path, header: &[&str], rows: &[Vec<CsvField>]) -> Result<()> {
    if !path.exists() {
        return write_csv(path, header, rows);
    }
    let mut existing = fs::read_to_string(path)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(CsvField::render).collect();
        existing.push_str(&line.join(","));
        existing.push('\n');
    }
    write_atomic(path, existing.as_bytes())
}

/// Pretty-printed JSON, written atomically.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short content digest of a spec's canonical JSON form.
pub fn spec_digest<S: Scalar>(spec: &ModelSpec<S>) -> String {
    let json = serde_json::to_string(spec).unwrap_or_default();
    sha256_hex(json.as_bytes())[..16].to_string()
}

/// Header of the batch index CSV.
pub const INDEX_CSV_HEADER: [&str; 10] = [
    "spec_hash",
    "convention",
    "x0",
    "window",
    "shape",
    "re",
    "im",
    "index",
    "bound_lhs",
    "bound_rhs",
];

/// CSV row of one index evaluation.
pub fn index_csv_row<S: Scalar>(digest: &str, report: &IndexReport<S>) -> Vec<CsvField> {
    let index_text = match report.index.as_int() {
        Some(i) => i.to_string(),
        None => "undefined".to_string(),
    };
    vec![
        CsvField::Str(digest.to_string()),
        CsvField::Str(format!("{:?}", report.convention)),
        CsvField::Num(report.x0.to_f64_lossy()),
        CsvField::Num(report.window.to_f64_lossy()),
        CsvField::Str(format!("{:?}", report.shape)),
        CsvField::Num(report.re.to_f64_lossy()),
        CsvField::Num(report.im.to_f64_lossy()),
        CsvField::Str(index_text),
        CsvField::Num(report.bound_lhs.to_f64_lossy()),
        CsvField::Num(report.bound_rhs.to_f64_lossy()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_round_trips_bit_exactly() {
        for x in [
            0.1,
            -1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.5e17,
            f64::MIN_POSITIVE,
        ] {
            let back: f64 = fmt_g17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    proptest! {
        #[test]
        fn g17_round_trips_random(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = fmt_g17(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_append_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], &[vec![CsvField::Int(1), CsvField::Num(0.5)]]).unwrap();
        append_csv(&p, &["a", "b"], &[vec![CsvField::Int(2), CsvField::Num(1.5)]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "a,b");
    }
}
