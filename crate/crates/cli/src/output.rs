//! CSV outputs and their metadata sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// `sha256("blob <len>\0" ++ bytes)`, hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV body with `#`-prefixed metadata lines.
#[derive(Debug, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { metadata: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Writes `body` to `out` (stdout when `None`) and, for files, the sidecar
/// with the resolved parameters, input hash and output hash.
pub fn emit(out: Option<&Path>, body: &[u8], inputs: &[u8], params: &str, command: &str) -> std::io::Result<()> {
    let Some(path) = out else {
        return std::io::stdout().lock().write_all(body);
    };
    std::fs::write(path, body)?;
    let mut meta = String::new();
    meta.push_str(&format!("command = {command}\n"));
    meta.push_str(params);
    meta.push_str(&format!("input_hash = {}\n", content_hash(inputs)));
    meta.push_str(&format!("output_hash = {}\n", content_hash(body)));
    std::fs::write(sidecar_path(path), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_blob_layout() {
        // sha256 of "blob 0\0"
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn table_renders_metadata_first() {
        let mut t = Table::new(&["t", "x"]);
        t.meta("kf", 1);
        t.row(vec!["0".into(), "1".into()]);
        assert_eq!(String::from_utf8(t.render()).unwrap(), "# kf = 1\nt,x\n0,1\n");
    }
}
