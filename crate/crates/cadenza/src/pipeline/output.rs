//! Deterministic text output.
//!
//! Analysis values are printed with 9 significant digits in scientific
//! notation so two runs produce byte-identical files on any platform; the
//! canonical piece CSV instead uses exact shortest round-trip formatting so
//! re-parsing reproduces the piece bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Format an analysis value with 9 significant digits.
pub fn fmt_value(v: f64) -> String {
    if v == 0.0 {
        // Collapse -0.0 so sign noise cannot leak into outputs.
        return "0.00000000e0".to_string();
    }
    format!("{v:.8e}")
}

/// Collects every file written during a run, for the manifest inventory.
pub struct OutputSet {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputSet {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write a file under the output root, creating parent directories.
    pub fn write(&mut self, relative: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = fs::File::create(&path)?;
        file.write_all(contents)?;
        self.written.push(relative.to_string());
        Ok(path)
    }

    /// Sorted inventory of relative paths written so far.
    pub fn inventory(&self) -> Vec<String> {
        let mut paths = self.written.clone();
        paths.sort();
        paths
    }
}

/// Build a CSV string from a header and rows (values pre-formatted).
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let escaped: Vec<String> = row.iter().map(|v| escape_csv(v)).collect();
        out.push_str(&escaped.join(","));
        out.push('\n');
    }
    out
}

fn escape_csv(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Filesystem-safe rendering of a piece id.
pub fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_value(0.5), "5.00000000e-1");
        assert_eq!(fmt_value(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_value(-12345.6789), "-1.23456789e4");
        assert_eq!(fmt_value(0.0), "0.00000000e0");
        assert_eq!(fmt_value(-0.0), "0.00000000e0");
    }

    #[test]
    fn csv_escapes_commas_and_quotes() {
        let text = csv_text(
            &["a", "b"],
            &[vec!["plain".into(), "has,comma".into()],
              vec!["has\"quote".into(), "x".into()]],
        );
        assert_eq!(text, "a,b\nplain,\"has,comma\"\n\"has\"\"quote\",x\n");
    }

    #[test]
    fn safe_names_stay_readable() {
        assert_eq!(safe_name("ArtPepper_Anthropology.mid"), "ArtPepper_Anthropology.mid");
        assert_eq!(safe_name("weird/id with spaces"), "weird_id_with_spaces");
    }
}
