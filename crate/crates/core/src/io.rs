//! File formats: dataset TSV, run report JSON, plot-data CSV and the sample
//! archive. Every writer replaces its target atomically.
//!
//! # Dataset TSV
//!
//! UTF-8, tab separated, `#` starts a comment line. The header is either
//! `id count phi` or `id count p sites ambiguous`, where `ambiguous` is a
//! comma-separated list of 1-based site indices and may be empty.
//!
//! # Sample archive (tab separated)
//!
//! ```text
//! #tagbias-samples  1
//! #meta  {"config": ..., "chain": 0, "wall_seconds": ...}
//! sample  N  trace:<id>...  m:<id>...
//! 1  16012.4  0.0031...
//! ```
//!
//! One row per retained draw. The scalar column is `N` or `r` depending on the
//! model; `m:` columns hold the full composition and are present only when
//! requested.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{AutocorrelationTable, PosteriorSummary, SummaryRow};
use crate::error::{Error, Result};
use crate::model::{compute_phi, CompositionVector, GeneRecord, TagDataset};
use crate::optimize::{OptimizerResult, Termination};
use crate::samplers::{FocalTrace, SampleStore, StoreMeta};

pub const REPORT_SCHEMA: &str = "tagbias.run-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;
const ARCHIVE_MAGIC: &str = "#tagbias-samples";
const ARCHIVE_VERSION: u32 = 1;

/// A parsed dataset and the rows dropped while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: TagDataset,
    pub warnings: Vec<String>,
}

enum Layout {
    Phi,
    Sites,
}

pub fn ingest(path: &Path) -> Result<Ingested> {
    let file = File::open(path)?;
    parse_dataset(file, &path.display().to_string())
}

/// Parses the dataset TSV. Categories with `phi = 0` and no tags cannot be
/// observed and are dropped with a warning; `phi = 0` with tags is an error.
pub fn parse_dataset<R: Read>(reader: R, source_name: &str) -> Result<Ingested> {
    let parse_error = |line: u64, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut layout = None;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (i, text) in BufReader::new(reader).lines().enumerate() {
        let line = i as u64 + 1;
        let text = text?;
        let text = text.trim_end_matches('\r');
        if let Some(label) = text.strip_prefix(SYNTHETIC_MARKER) {
            warnings.push(format!("synthetic input:{label}"));
            continue;
        }
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
        let Some(layout) = &layout else {
            layout = Some(match fields.as_slice() {
                ["id", "count", "phi"] => Layout::Phi,
                ["id", "count", "p", "sites", "ambiguous"] => Layout::Sites,
                _ => return Err(parse_error(line, format!("unrecognized header {fields:?}"))),
            });
            continue;
        };
        let width = match layout {
            Layout::Phi => 3,
            Layout::Sites => 5,
        };
        // a trailing empty ambiguous column may be dropped by editors
        let fields = match (layout, fields.len()) {
            (Layout::Sites, 4) => [fields, vec![""]].concat(),
            _ => fields,
        };
        if fields.len() != width {
            return Err(parse_error(
                line,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(parse_error(line, "empty id".into()));
        }
        let count: u64 = fields[1].parse().map_err(|_| {
            parse_error(
                line,
                format!("count {:?} is not a non-negative integer", fields[1]),
            )
        })?;
        let phi = match layout {
            Layout::Phi => fields[2]
                .parse::<f64>()
                .map_err(|_| parse_error(line, format!("phi {:?} is not a number", fields[2])))?,
            Layout::Sites => {
                let p: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_error(line, format!("p {:?} is not a number", fields[2])))?;
                let sites: usize = fields[3].parse().map_err(|_| {
                    parse_error(line, format!("sites {:?} is not an integer", fields[3]))
                })?;
                let ambiguous = parse_sites(fields[4]).map_err(|m| parse_error(line, m))?;
                compute_phi(p, sites, &ambiguous).map_err(|e| parse_error(line, e.to_string()))?
            }
        };
        if !(0.0..=1.0).contains(&phi) {
            return Err(parse_error(line, format!("phi {phi} outside (0, 1]")));
        }
        if phi == 0.0 {
            if count > 0 {
                return Err(parse_error(
                    line,
                    format!("{id} has {count} tags but phi = 0"),
                ));
            }
            warnings.push(format!(
                "{source_name}:{line}: dropped unobservable category {id}"
            ));
            continue;
        }
        records.push(GeneRecord::new(id, count, phi));
    }
    if layout.is_none() {
        return Err(parse_error(0, "missing header".into()));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Ingested {
        data: TagDataset::new(records)?,
        warnings,
    })
}

fn parse_sites(field: &str) -> std::result::Result<BTreeSet<usize>, String> {
    field
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| format!("ambiguous site {s:?} is not an integer"))
        })
        .collect()
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| w.write_all(bytes).map_err(Error::from))
}

fn write_atomic_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes `data` in the `id count phi` layout; reading it back yields an
/// identical dataset.
pub fn write_dataset(path: &Path, data: &TagDataset) -> Result<()> {
    write_dataset_labeled(path, data, None)
}

/// Comment prefix marking a simulated dataset; ingestion reports it as a
/// warning so downstream reports carry the label.
pub const SYNTHETIC_MARKER: &str = "# synthetic";

/// Like [`write_dataset`], with an optional synthetic-data label line.
pub fn write_dataset_labeled(
    path: &Path,
    data: &TagDataset,
    synthetic: Option<&str>,
) -> Result<()> {
    write_atomic_with(path, |w| {
        if let Some(label) = synthetic {
            writeln!(w, "{SYNTHETIC_MARKER} {label}")?;
        }
        writeln!(w, "id\tcount\tphi")?;
        for r in data.records() {
            writeln!(w, "{}\t{}\t{}", r.id, r.tag_count, r.phi)?;
        }
        Ok(())
    })
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: String,
    pub sha256: String,
    pub seed: Option<u64>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

/// A deterministic point estimate and how its iteration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub m: Vec<f64>,
    pub iterations_used: usize,
    pub final_residual: f64,
    pub termination: Termination,
}

impl From<&OptimizerResult> for ModeEstimate {
    fn from(r: &OptimizerResult) -> Self {
        Self {
            m: r.m.values().to_vec(),
            iterations_used: r.iterations_used,
            final_residual: r.final_residual,
            termination: r.termination.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub ids: Vec<String>,
    pub naive_mle: Option<Vec<f64>>,
    pub corrected_mle: Option<Vec<f64>>,
    pub natural_population_estimate: f64,
    /// Closed-form posterior mean of the missing-data model.
    #[serde(default)]
    pub md_exact_mean: Option<Vec<f64>>,
    /// Keyed by estimator name.
    pub modes: BTreeMap<String, ModeEstimate>,
}

/// Machine-readable record of one command invocation. `config` together with
/// the input digest reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub schema_version: u32,
    pub command: String,
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub estimates: Option<PointEstimates>,
    pub summary: Option<PosteriorSummary>,
    pub diagnostics: Vec<AutocorrelationTable>,
    pub timings: Vec<PhaseTiming>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, provenance: Provenance, config: serde_json::Value) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_string(),
            provenance,
            config,
            estimates: None,
            summary: None,
            diagnostics: Vec::new(),
            timings: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    write_atomic_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One row of the tidy plot-data table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub rank: usize,
    pub id: String,
    pub naive_mle: Option<f64>,
    pub corrected_mle: Option<f64>,
    pub post_mean: Option<f64>,
    pub post_mode: Option<f64>,
    pub lower95: Option<f64>,
    pub upper95: Option<f64>,
}

impl From<&SummaryRow> for PlotRow {
    fn from(r: &SummaryRow) -> Self {
        Self {
            rank: r.rank,
            id: r.id.clone(),
            naive_mle: r.naive_mle,
            corrected_mle: r.corrected_mle,
            post_mean: Some(r.mean),
            post_mode: r.mode,
            lower95: Some(r.lower95),
            upper95: Some(r.upper95),
        }
    }
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    write_atomic_with(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in rows {
            csv.serialize(row)?;
        }
        if rows.is_empty() {
            csv.write_record([
                "rank",
                "id",
                "naive_mle",
                "corrected_mle",
                "post_mean",
                "post_mode",
                "lower95",
                "upper95",
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn read_plot_csv(path: &Path) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes the retained scalar and traced series of `store`, plus every draw
/// of `m` when `full` is set (`ids` names the categories).
pub fn write_sample_archive(
    path: &Path,
    store: &SampleStore,
    ids: &[String],
    full: bool,
) -> Result<()> {
    let scalar = store.meta.config.model.scalar_name();
    write_atomic_with(path, |w| {
        writeln!(w, "{ARCHIVE_MAGIC}\t{ARCHIVE_VERSION}")?;
        writeln!(w, "#meta\t{}", serde_json::to_string(&store.meta)?)?;
        write!(w, "sample\t{scalar}")?;
        for f in &store.trace_focal {
            write!(w, "\ttrace:{}", f.id)?;
        }
        if full {
            for id in ids {
                write!(w, "\tm:{id}")?;
            }
        }
        writeln!(w)?;
        for (row, n) in store.trace_n.iter().enumerate() {
            write!(w, "{}\t{n}", row + 1)?;
            for f in &store.trace_focal {
                write!(w, "\t{}", f.values[row])?;
            }
            if full {
                for v in store.retained_m[row].iter() {
                    write!(w, "\t{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Reads an archive back into a [`SampleStore`]. `retained_m` is empty unless
/// the archive holds the full composition.
pub fn read_sample_archive(path: &Path) -> Result<SampleStore> {
    let source_name = path.display().to_string();
    let parse_error = |line: usize, message: String| Error::Parse {
        source_name: source_name.clone(),
        line: line as u64,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(parse_error(0, format!("missing {what}"))),
        }
    };

    let (no, magic) = next_line("archive marker")?;
    match magic.split_once('\t') {
        Some((ARCHIVE_MAGIC, v)) if v.trim() == ARCHIVE_VERSION.to_string() => {}
        _ => {
            return Err(parse_error(
                no,
                format!("not a version {ARCHIVE_VERSION} sample archive"),
            ))
        }
    }
    let (no, meta_line) = next_line("metadata")?;
    let meta: StoreMeta = match meta_line.split_once('\t') {
        Some(("#meta", json)) => serde_json::from_str(json)?,
        _ => return Err(parse_error(no, "missing #meta line".into())),
    };
    let (no, header) = next_line("column header")?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < 2 || columns[0] != "sample" {
        return Err(parse_error(no, "malformed column header".into()));
    }
    let focal_ids: Vec<String> = columns[2..]
        .iter()
        .filter_map(|c| c.strip_prefix("trace:"))
        .map(str::to_string)
        .collect();
    let full_width = columns[2..].iter().filter(|c| c.starts_with("m:")).count();
    if 2 + focal_ids.len() + full_width != columns.len() {
        return Err(parse_error(no, "unrecognized column".into()));
    }

    let mut trace_n = Vec::new();
    let mut focal: Vec<Vec<f64>> = vec![Vec::new(); focal_ids.len()];
    let mut retained_m = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split('\t')
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_error(no, format!("bad value {v:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() + 1 != columns.len() {
            return Err(parse_error(
                no,
                format!(
                    "expected {} fields, found {}",
                    columns.len(),
                    values.len() + 1
                ),
            ));
        }
        trace_n.push(values[0]);
        for (series, v) in focal.iter_mut().zip(&values[1..]) {
            series.push(*v);
        }
        if full_width > 0 {
            let m = values[1 + focal_ids.len()..].to_vec();
            retained_m.push(CompositionVector::new(m).map_err(|e| parse_error(no, e.to_string()))?);
        }
    }
    Ok(SampleStore {
        retained_m,
        trace_n,
        trace_focal: focal_ids
            .into_iter()
            .zip(focal)
            .map(|(id, values)| FocalTrace { id, values })
            .collect(),
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Ingested> {
        parse_dataset(text.as_bytes(), "test.tsv")
    }

    #[test]
    fn phi_layout() {
        let got = parse("# library A\nid\tcount\tphi\ng1\t2\t1\ng2\t1\t0.5\ng3\t1\t0.5\n").unwrap();
        assert_eq!(got.data.len(), 3);
        assert_eq!(got.data.total_tags(), 4);
        assert_eq!(got.data.phi(), &[1.0, 0.5, 0.5]);
        assert!(got.warnings.is_empty());
    }

    #[test]
    fn site_layout_resolves_phi() {
        let got =
            parse("id\tcount\tp\tsites\tambiguous\ng1\t4\t0.1\t3\t2\ng2\t0\t0.5\t2\t\n").unwrap();
        assert!((got.data.phi()[0] - 0.181).abs() < 1e-12);
        assert!((got.data.phi()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_phi_rows() {
        let err = parse("id\tcount\tphi\ng0\t1\t0.3\ng1\t5\t0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let got = parse("id\tcount\tphi\ng0\t1\t0.3\ng1\t0\t0\n").unwrap();
        assert_eq!(got.data.len(), 1);
        assert_eq!(got.warnings.len(), 1);
        // every site ambiguous gives phi = 0
        let got =
            parse("id\tcount\tp\tsites\tambiguous\ng1\t0\t0.5\t2\t1,2\ng2\t3\t0.5\t1\t\n").unwrap();
        assert_eq!(got.data.len(), 1);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        for (text, expected) in [
            ("id\tcount\tphi\ng1\t-2\t0.5\n", 2),
            ("id\tcount\tphi\ng1\t2\n", 2),
            ("id\tcount\tphi\ng1\t2\t0.5\n\ng2\t1\t1.5\n", 4),
            ("id\tcount\tp\tsites\tambiguous\ng1\t2\t0.5\t2\t3\n", 2),
            ("name\tcount\n", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
        assert!(matches!(
            parse("id\tcount\tphi\ng1\t2\t0.5\ng1\t1\t0.5\n"),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        let data = TagDataset::from_counts(&[3, 0, 17], &[0.1 + 0.2, 1.0 / 3.0, 1.0]).unwrap();
        write_dataset(&path, &data).unwrap();
        assert_eq!(ingest(&path).unwrap().data, data);
    }

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        write_atomic(&path, b"abc").unwrap();
        assert_eq!(
            file_digest(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
