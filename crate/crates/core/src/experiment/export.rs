//! File formats: CSV tables, TOML documents and the run manifest.

use super::analysis::{Histogram, MarginalRow, SampleStats};
use crate::error::{Error, Result};
use crate::map::LmStep;
use crate::mcmc::GelmanRubin;
use crate::samples::{Layout, Sample, SampleSet};
use crate::topo::{Grid, TopoField};
use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Write through a temporary file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    atomic_write(path, text.as_bytes())
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
}

/// A CSV table with a header row; numbers use the shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        atomic_write(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::InvalidInput(format!("missing column {name}")))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::InvalidInput(format!("cannot parse {s:?}")))
}

/// Detector data with columns `x, y, re, im`.
pub fn data_table(points: &[[f64; 2]], values: &[Complex64]) -> Table {
    let mut t = Table::new(["x", "y", "re", "im"]);
    for (p, v) in points.iter().zip(values) {
        t.push(vec![num(p[0]), num(p[1]), num(v.re), num(v.im)]);
    }
    t
}

pub fn read_data_table(t: &Table) -> Result<(Vec<[f64; 2]>, Vec<Complex64>)> {
    let mut pts = Vec::with_capacity(t.rows.len());
    let mut vals = Vec::with_capacity(t.rows.len());
    for r in &t.rows {
        pts.push([parse(&r[0])?, parse(&r[1])?]);
        vals.push(Complex64::new(parse(&r[2])?, parse(&r[3])?));
    }
    Ok((pts, vals))
}

pub fn samples_table(set: &SampleSet) -> Table {
    let mut headers = vec!["step".to_string(), "walker".into(), "admissible".into(), "log_posterior".into()];
    headers.extend(set.layout.parameter_names());
    let mut t = Table { headers, rows: Vec::with_capacity(set.len()) };
    for s in &set.samples {
        let mut row = vec![s.step.to_string(), s.walker.to_string(), u8::from(s.admissible).to_string(), num(s.log_posterior)];
        row.extend(s.nu.iter().map(|v| num(*v)));
        t.push(row);
    }
    t
}

pub fn read_samples_table(t: &Table, layout: Layout) -> Result<SampleSet> {
    if t.headers.len() != 4 + layout.dim() {
        return Err(Error::LengthMismatch { expected: 4 + layout.dim(), got: t.headers.len() });
    }
    let mut set = SampleSet::new(layout);
    for r in &t.rows {
        set.samples.push(Sample {
            step: parse(&r[0])?,
            walker: parse(&r[1])?,
            admissible: r[2] == "1",
            log_posterior: parse(&r[3])?,
            nu: r[4..].iter().map(|v| parse(v)).collect::<Result<_>>()?,
        });
    }
    Ok(set)
}

pub fn trace_table(trace: &[LmStep]) -> Table {
    let mut t = Table::new(["iteration", "lambda", "mu", "cost_before", "cost_after", "step_norm", "accepted"]);
    for s in trace {
        t.push(vec![
            s.iteration.to_string(),
            num(s.lambda),
            num(s.mu),
            num(s.cost_before),
            num(s.cost_after),
            num(s.step_norm),
            u8::from(s.accepted).to_string(),
        ]);
    }
    t
}

/// Gridded field as `x, y, value` triples.
pub fn grid_table(grid: &Grid, values: &[f64]) -> Table {
    let mut t = Table::new(["x", "y", "value"]);
    for (p, v) in grid.points().iter().zip(values) {
        t.push(vec![num(p[0]), num(p[1]), num(*v)]);
    }
    t
}

pub fn topo_table(field: &TopoField) -> Table {
    grid_table(&field.grid, &field.values)
}

pub fn rhat_table(names: &[String], g: &GelmanRubin) -> Table {
    let mut t = Table::new(["parameter", "rhat", "degenerate"]);
    for ((n, r), d) in names.iter().zip(&g.rhat).zip(&g.degenerate) {
        t.push(vec![n.clone(), num(*r), u8::from(*d).to_string()]);
    }
    t
}

pub fn marginals_table(rows: &[MarginalRow]) -> Table {
    let mut t = Table::new(["component", "angle", "q05", "q25", "q50", "q75", "q95"]);
    for r in rows {
        let mut row = vec![r.component.to_string(), num(r.angle)];
        row.extend(r.quantiles.iter().map(|v| num(*v)));
        t.push(row);
    }
    t
}

pub fn stats_table(stats: &[SampleStats]) -> Table {
    let mut t = Table::new([
        "sample", "component", "area", "deviation", "center_x", "center_y", "r_min", "r_max", "dir_min", "dir_max", "kappa_i",
    ]);
    for s in stats {
        let st = &s.stats;
        t.push(vec![
            s.sample.to_string(),
            s.component.to_string(),
            num(st.area),
            num(st.deviation),
            num(st.center_of_mass[0]),
            num(st.center_of_mass[1]),
            num(st.r_min),
            num(st.r_max),
            num(st.dir_min),
            num(st.dir_max),
            s.kappa_i.map(num).unwrap_or_default(),
        ]);
    }
    t
}

pub fn histogram_table(hists: &[Histogram]) -> Table {
    let mut t = Table::new(["statistic", "component", "bin_lo", "bin_hi", "count"]);
    for h in hists {
        for (k, c) in h.counts.iter().enumerate() {
            t.push(vec![h.name.clone(), h.component.to_string(), num(h.edges[k]), num(h.edges[k + 1]), c.to_string()]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    #[serde(default)]
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self { config_hash, seed, version: env!("CARGO_PKG_VERSION").into(), files: Vec::new(), stages: Vec::new() }
    }

    /// Add or refresh the entry for `file` inside `dir`.
    pub fn record(&mut self, dir: &Path, file: &str, role: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(file))?;
        let entry = FileEntry { file: file.into(), role: role.into(), sha256 };
        match self.files.iter_mut().find(|f| f.file == file) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(())
    }

    pub fn stage(&mut self, name: &str, status: &str, message: String) {
        let rec = StageRecord { name: name.into(), status: status.into(), message };
        match self.stages.iter_mut().find(|s| s.name == name) {
            Some(s) => *s = rec,
            None => self.stages.push(rec),
        }
    }

    /// Every listed file exists with its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            if sha256_file(&dir.join(&f.file))? != f.sha256 {
                return Err(Error::InvalidInput(format!("checksum mismatch for {}", f.file)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout { components: 1, modes: 1, has_kappa: true };
        let mut set = SampleSet::new(layout);
        set.samples.push(Sample { step: 3, walker: 1, nu: vec![0.1, -1e-17, 0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 15.04], log_posterior: f64::NEG_INFINITY, admissible: false });
        set.samples.push(Sample { step: 4, walker: 0, nu: vec![std::f64::consts::PI; 6], log_posterior: -12.5, admissible: true });
        let p = dir.path().join("s.csv");
        samples_table(&set).write(&p).unwrap();
        assert_eq!(read_samples_table(&Table::read(&p).unwrap(), layout).unwrap(), set);

        let pts = vec![[-5.0, 5.0], [-4.9, 5.0]];
        let vals = vec![Complex64::new(0.1, 0.7), Complex64::new(-2e-300, 1.0 / 7.0)];
        let q = dir.path().join("d.csv");
        data_table(&pts, &vals).write(&q).unwrap();
        assert_eq!(read_data_table(&Table::read(&q).unwrap()).unwrap(), (pts, vals));
    }

    #[test]
    fn manifest_tracks_checksums() {
        let dir = tempfile::tempdir().unwrap();
        atomic_write(&dir.path().join("a.txt"), b"hello").unwrap();
        let mut m = Manifest::new("abc".into(), 7);
        m.record(dir.path(), "a.txt", "test").unwrap();
        m.record(dir.path(), "a.txt", "test").unwrap();
        assert_eq!(m.files.len(), 1);
        m.verify(dir.path()).unwrap();
        let p = dir.path().join("manifest.toml");
        write_toml(&p, &m).unwrap();
        assert_eq!(read_toml::<Manifest>(&p).unwrap(), m);
        std::fs::write(dir.path().join("a.txt"), b"changed").unwrap();
        assert!(m.verify(dir.path()).is_err());
    }
}
