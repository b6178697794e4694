//! Artifact output: CSV tables tagged with run metadata, JSON records, a plot script and
//! the manifest that lists every file with its SHA-256.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Columns appended to every CSV row.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RowMeta {
    pub n: u32,
    pub a: f64,
    pub lambda: f64,
    pub seed: u64,
    pub fixture_version: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub kind: &'static str,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: String,
    pub status: &'static str,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

/// Collects the files of one run in an output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    meta: RowMeta,
    artifacts: Vec<Artifact>,
    csvs: Vec<(String, Vec<String>)>,
}

/// A CSV table under construction; cells are written with shortest round-trip formatting.
pub struct Table {
    header: Vec<String>,
    meta_header: String,
    body: String,
    meta: String,
}

/// A value that can sit in a CSV cell.
pub trait Cell {
    fn cell(&self, out: &mut String);
}

impl Cell for f64 {
    fn cell(&self, out: &mut String) {
        write!(out, "{self}").unwrap();
    }
}

impl Cell for Option<f64> {
    fn cell(&self, out: &mut String) {
        if let Some(v) = self {
            v.cell(out);
        }
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => { $( impl Cell for $t { fn cell(&self, out: &mut String) { write!(out, "{self}").unwrap(); } } )* };
}
int_cell!(i8, i32, i64, u32, u64, usize);

impl Cell for &str {
    fn cell(&self, out: &mut String) {
        if self.contains([',', '"', '\n']) {
            write!(out, "\"{}\"", self.replace('"', "\"\"")).unwrap();
        } else {
            out.push_str(self);
        }
    }
}

impl Cell for String {
    fn cell(&self, out: &mut String) {
        self.as_str().cell(out);
    }
}

impl Table {
    pub fn row(&mut self, cells: &[&dyn Cell]) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            c.cell(&mut self.body);
        }
        self.body.push_str(&self.meta);
        self.body.push('\n');
    }
}

impl ArtifactWriter {
    pub fn new(dir: &Path, meta: RowMeta) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), meta, artifacts: Vec::new(), csvs: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn meta(&self) -> RowMeta {
        self.meta
    }

    /// A table with the given columns; metadata columns not already among them are appended.
    pub fn table(&self, columns: &[&str]) -> Table {
        let m = self.meta;
        let all = [
            ("n", m.n.to_string()),
            ("a", m.a.to_string()),
            ("lambda", m.lambda.to_string()),
            ("seed", m.seed.to_string()),
            ("fixture_version", m.fixture_version.to_string()),
        ];
        let extra: Vec<_> = all.iter().filter(|(k, _)| !columns.contains(k)).collect();
        Table {
            header: columns.iter().map(|s| s.to_string()).collect(),
            meta_header: extra.iter().map(|(k, _)| format!(",{k}")).collect(),
            body: String::new(),
            meta: extra.iter().map(|(_, v)| format!(",{v}")).collect(),
        }
    }

    fn put(&mut self, name: &str, kind: &'static str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            kind,
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, t: Table) -> Result<()> {
        let mut text = t.header.join(",");
        text.push_str(&t.meta_header);
        text.push('\n');
        text.push_str(&t.body);
        self.csvs.push((name.to_string(), t.header.clone()));
        self.put(name, "csv", text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.put(name, "json", text.as_bytes())
    }

    pub fn text(&mut self, name: &str, kind: &'static str, text: &str) -> Result<()> {
        self.put(name, kind, text.as_bytes())
    }

    /// Writes `plot.py` (when any CSV was produced) and the manifest.
    pub fn finish(mut self, command: &str, status: &'static str, config: serde_json::Value) -> Result<Manifest> {
        if !self.csvs.is_empty() {
            let script = plot_script(&self.csvs);
            self.put("plot.py", "script", script.as_bytes())?;
        }
        let manifest = Manifest { schema: MANIFEST_SCHEMA, command: command.to_string(), status, config, artifacts: self.artifacts };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

/// A generic matplotlib script: one figure per CSV, first column against the others.
fn plot_script(csvs: &[(String, Vec<String>)]) -> String {
    let mut s = String::from(
        "#!/usr/bin/env python3\n\
         \"\"\"Plots the CSV artifacts of this run: first column on x, the remaining numeric columns on y.\"\"\"\n\
         import csv\nimport sys\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n\
         TABLES = [\n",
    );
    for (name, cols) in csvs {
        let quoted: Vec<String> = cols.iter().map(|c| format!("{c:?}")).collect();
        writeln!(s, "    ({name:?}, [{}]),", quoted.join(", ")).unwrap();
    }
    s.push_str(
        "]\n\n\
         def column(rows, key):\n    out = []\n    for r in rows:\n        try:\n            out.append(float(r[key]))\n        except (TypeError, ValueError):\n            return None\n    return out\n\n\
         def main(directory=\".\"):\n    for name, cols in TABLES:\n        with open(f\"{directory}/{name}\") as fh:\n            rows = list(csv.DictReader(fh))\n        if not rows:\n            continue\n        x = column(rows, cols[0])\n        if x is None:\n            continue\n        fig, ax = plt.subplots()\n        for c in cols[1:]:\n            y = column(rows, c)\n            if y is not None:\n                ax.plot(x, y, \".-\", label=c)\n        ax.set_xlabel(cols[0])\n        ax.set_title(name)\n        ax.legend()\n        fig.savefig(f\"{directory}/{name[:-4]}.png\", dpi=120)\n        plt.close(fig)\n\n\n\
         if __name__ == \"__main__\":\n    main(*sys.argv[1:])\n",
    );
    s
}
