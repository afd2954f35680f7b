//! CSV output: UTF-8, `\n` line endings, header row.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_string<T: Serialize>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

/// Writes to `path`, or stdout when absent.
pub fn emit<T: Serialize>(path: Option<&Path>, rows: &[T]) -> anyhow::Result<()> {
    match path {
        Some(p) => write_rows(BufWriter::new(File::create(p)?), rows)?,
        None => write_rows(io::stdout().lock(), rows)?,
    }
    Ok(())
}

/// `out.csv` with suffix `alpha` becomes `out_alpha.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}
