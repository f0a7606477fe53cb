use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Iterate error and relative tensor error.
    Fig1,
    /// Relative tensor error against the error-floor proxy.
    Fig2,
    /// Iterate error, relative tensor error and Dennis–Moré ratio.
    Fig3,
    /// Step angles.
    Fig4,
}

impl Figure {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Figure::Fig1 => &["k", "x_err", "rel_frob_err"],
            Figure::Fig2 => &["k", "rel_frob_err", "proxy"],
            Figure::Fig3 => &["k", "x_err", "rel_frob_err", "dm_ratio"],
            Figure::Fig4 => &["k", "angle_deg"],
        }
    }
}

/// Whitespace-separated columns with a `#` header line.
pub fn extract(csv_path: &Path, figure: Figure) -> anyhow::Result<String> {
    let mut reader = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let header = reader.headers()?.clone();
    let mut idx = Vec::new();
    for col in figure.columns() {
        match header.iter().position(|h| h == *col) {
            Some(i) => idx.push(i),
            None => bail!("{} has no column {col:?}", csv_path.display()),
        }
    }
    let mut out = format!("# {}\n", figure.columns().join(" "));
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}", line + 2))?;
        let fields: Vec<&str> = idx.iter().map(|&i| record.get(i).unwrap_or("")).collect();
        if fields.iter().skip(1).all(|f| f.is_empty()) {
            continue;
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn emit(csv_path: &Path, figure: Figure, out: Option<&Path>) -> anyhow::Result<()> {
    let text = extract(csv_path, figure)?;
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn projects_columns_and_drops_empty_rows() {
        let f = csv("k,x_err,step_norm,rel_frob_err,dm_ratio,proxy,angle_deg,skipped\n1,0.5,1,0.25,NaN,1,,true\n2,0.1,0.4,0.2,0.3,0.4,12.5,false\n");
        assert_eq!(extract(f.path(), Figure::Fig1).unwrap(), "# k x_err rel_frob_err\n1 0.5 0.25\n2 0.1 0.2\n");
        assert_eq!(extract(f.path(), Figure::Fig4).unwrap(), "# k angle_deg\n2 12.5\n");
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = csv("k,x_err\n1,0.5\n");
        assert!(extract(f.path(), Figure::Fig2).is_err());
    }
}
