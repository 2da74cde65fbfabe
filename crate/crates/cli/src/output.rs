use crate::CliResult;
use epsense_core::spectral::FitResult;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// CSV with a `#`-prefixed JSON line carrying the config, so the file is
/// self-describing. Numbers use shortest round-trip formatting, which is
/// deterministic for identical inputs.
pub fn csv_text<C: serde::Serialize>(config: &C, columns: &[&str], rows: &[Vec<f64>]) -> String {
    let header = serde_json::to_string(config).expect("config serializes");
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    writeln!(out, "{}", columns.join(",")).unwrap();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(",")).unwrap();
    }
    out
}

/// Sidecar path: `<out>.fit.json` next to the CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut os = csv_path.as_os_str().to_owned();
    os.push(".fit.json");
    PathBuf::from(os)
}

pub fn write_csv_and_fit<C: serde::Serialize>(
    csv_path: &Path,
    config: &C,
    columns: &[&str],
    rows: &[Vec<f64>],
    fit: Option<&FitResult>,
) -> CliResult<Option<PathBuf>> {
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(csv_path, csv_text(config, columns, rows))?;
    match fit {
        Some(fit) => {
            let path = sidecar_path(csv_path);
            let mut text = serde_json::to_string_pretty(fit).expect("fit serializes");
            text.push('\n');
            std::fs::write(&path, text)?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}
