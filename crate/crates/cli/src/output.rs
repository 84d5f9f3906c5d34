//! Versioned CSV tables.
//!
//! Every file starts with a comment line `# impulse-csv v1 <kind>` followed by
//! a header row. Floats are written in the shortest form that reads back to
//! the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IMPULSE_OUT_DIR";

/// A table of string cells with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, header: &[&str]) -> Self {
        Table {
            kind: kind.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cells of column `name` parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name).with_context(|| format!("no column {name}"))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().with_context(|| format!("bad number {:?}", r[c])))
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# impulse-csv v{SCHEMA_VERSION} {}", self.kind)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for r in &self.rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_to(std::io::BufWriter::new(f))
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut reader = BufReader::new(f);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let kind = match first.trim_end().strip_prefix("# impulse-csv v") {
            Some(rest) => match rest.split_once(' ') {
                Some((v, kind)) if v == SCHEMA_VERSION.to_string() => kind.to_string(),
                _ => bail!("{}: unsupported schema line {first:?}", path.display()),
            },
            None => bail!("{}: missing schema line", path.display()),
        };
        let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let header = csv.headers()?.iter().map(String::from).collect();
        let rows = csv
            .records()
            .map(|r| Ok(r?.iter().map(String::from).collect()))
            .collect::<Result<_>>()?;
        Ok(Table { kind, header, rows })
    }
}

/// Shortest round-trip form; exponent notation for tiny and huge magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

/// `explicit`, or `<default dir>/<name>` where the directory comes from
/// [`OUT_DIR_ENV`] and falls back to the working directory.
pub fn resolve_out(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        dir.join(name)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/t.csv");
        let mut t = Table::new("demo", &["x", "v", "note"]);
        t.push(vec![num(0.1 + 0.2), num(-1e-300), "a,b".into()]);
        t.push(vec![num(f64::MAX), num(5.0), String::new()]);
        t.write(&path).unwrap();
        let back = Table::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.floats("x").unwrap()[0], 0.1 + 0.2);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, -0.0, 1.5, 1e-300, 3.2e-9, 1e20, -7.25e-5, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(num(1.9e-12), "1.9e-12");
        assert_eq!(num(-2.8125), "-2.8125");
    }

    #[test]
    fn rejects_unversioned_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "x,v\n1,2\n").unwrap();
        assert!(Table::read(&path).is_err());
    }
}
