//! CSV formats for gain lists, labeled datasets, trajectories and bench
//! tables.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-exact. Lines starting with `#` are comments; writers may emit a single
//! `# generated_unix=...` line at the top. Files are written to a temporary
//! sibling and renamed into place.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::bench::ComparisonReport;
use crate::criteria::{Criterion, Label, StabilityReport};
use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::params::{GainVector, State, Tangent};
use crate::sampler::{Dataset, SampleRecord};
use crate::sensitivity::{max_abs_pct_error, GradientSet};

pub const THETA_HEADER: [&str; 4] = ["K11", "K12", "K21", "K22"];

pub const LABELED_HEADER: [&str; 12] = [
    "K11",
    "K12",
    "K21",
    "K22",
    "label",
    "rocof_hz_s",
    "nadir_hz",
    "ss_hz",
    "t_rocof",
    "t_nadir",
    "converged",
    "iterations",
];

pub const TRAJECTORY_HEADER: [&str; 3] = ["t", "omega_pu", "omegadot_pu"];

/// `s{r}{i}` is `dx_r/dK_i`, listed column by column.
pub const TANGENT_HEADER: [&str; 8] = ["s11", "s21", "s12", "s22", "s13", "s23", "s14", "s24"];

pub const GRAD_HEADER: [&str; 5] = ["criterion", "component", "fmad", "fd", "abs_pct_error"];

pub const BENCH_HEADER: [&str; 8] = [
    "method",
    "memory_bytes",
    "time_s",
    "err_x_tss",
    "err_x_tnadir",
    "err_x_trocof",
    "err_g_nadir",
    "err_g_rocof",
];

/// Decimal form with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writer options shared by every format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    pub timestamp: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions { timestamp: true }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>, opts: WriteOptions) -> Vec<u8> {
    let mut buf = Vec::new();
    if opts.timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(buf, "# generated_unix={secs}").expect("write to vec");
    }
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header).expect("write to vec");
        for row in rows {
            w.write_record(&row).expect("write to vec");
        }
        w.flush().expect("write to vec");
    }
    buf
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes)
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::SchemaMismatch {
        row: 0,
        column: String::new(),
        message: e.to_string(),
    })?;
    if header.len() != expected.len() {
        return Err(Error::SchemaMismatch {
            row: 0,
            column: String::new(),
            message: format!("expected {} columns {:?}, found {}", expected.len(), expected, header.len()),
        });
    }
    for (got, want) in header.iter().zip(expected) {
        if got.trim() != *want {
            return Err(Error::SchemaMismatch {
                row: 0,
                column: (*want).to_string(),
                message: format!("header has `{got}`"),
            });
        }
    }
    Ok(())
}

fn records(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<csv::StringRecord>> {
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::SchemaMismatch {
                row: i + 1,
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_f64(rec: &csv::StringRecord, row: usize, col: usize, header: &[&str]) -> Result<f64> {
    let s = rec.get(col).unwrap_or("").trim();
    s.parse::<f64>().map_err(|_| Error::SchemaMismatch {
        row,
        column: header[col].to_string(),
        message: format!("`{s}` is not a number"),
    })
}

fn parse_opt<T: std::str::FromStr>(rec: &csv::StringRecord, row: usize, col: usize, header: &[&str]) -> Result<Option<T>> {
    let s = rec.get(col).unwrap_or("").trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<T>().map(Some).map_err(|_| Error::SchemaMismatch {
        row,
        column: header[col].to_string(),
        message: format!("cannot parse `{s}`"),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

// ---- gain lists -----------------------------------------------------------

pub fn thetas_to_csv(thetas: &[GainVector], opts: WriteOptions) -> Vec<u8> {
    csv_bytes(
        &THETA_HEADER,
        thetas.iter().map(|t| t.to_array().iter().map(|v| fmt_f64(*v)).collect()),
        opts,
    )
}

pub fn thetas_from_csv(bytes: &[u8]) -> Result<Vec<GainVector>> {
    let mut rdr = reader(bytes);
    check_header(&mut rdr, &THETA_HEADER)?;
    records(&mut rdr)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut a = [0.0; 4];
            for (c, v) in a.iter_mut().enumerate() {
                *v = parse_f64(rec, i + 1, c, &THETA_HEADER)?;
            }
            Ok(GainVector::from_array(a))
        })
        .collect()
}

pub fn read_thetas(path: &Path) -> Result<Vec<GainVector>> {
    thetas_from_csv(&read_file(path)?)
}

pub fn write_thetas(path: &Path, thetas: &[GainVector], opts: WriteOptions) -> Result<()> {
    write_atomic(path, &thetas_to_csv(thetas, opts))
}

// ---- labeled rows ---------------------------------------------------------

/// One row of the labeled dataset CSV. Metric columns are empty for invalid
/// rows; `converged` and `iterations` are empty for plain labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledRow {
    pub theta: GainVector,
    pub label: Label,
    pub rocof_hz_s: Option<f64>,
    pub nadir_hz: Option<f64>,
    pub ss_hz: Option<f64>,
    pub t_rocof: Option<f64>,
    pub t_nadir: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
}

impl LabeledRow {
    pub fn from_outcome(theta: GainVector, outcome: &Result<StabilityReport>) -> Self {
        let report = outcome.as_ref().ok();
        LabeledRow::new(theta, report, None, None)
    }

    pub fn from_record(rec: &SampleRecord) -> Self {
        let report = rec.report_final.as_ref().filter(|_| rec.label_final != Label::Invalid);
        LabeledRow::new(rec.theta_final, report, Some(rec.converged), Some(rec.iterations))
    }

    fn new(theta: GainVector, report: Option<&StabilityReport>, converged: Option<bool>, iterations: Option<usize>) -> Self {
        LabeledRow {
            theta,
            label: report.map_or(Label::Invalid, |r| r.label),
            rocof_hz_s: report.map(|r| r.rocof_hz_s),
            nadir_hz: report.map(|r| r.nadir_hz),
            ss_hz: report.map(|r| r.ss_hz),
            t_rocof: report.map(|r| r.critical.t_rocof),
            t_nadir: report.map(|r| r.critical.t_nadir),
            converged,
            iterations,
        }
    }

    fn to_fields(self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut f: Vec<String> = self.theta.to_array().iter().map(|v| fmt_f64(*v)).collect();
        f.push(self.label.to_string());
        f.extend([self.rocof_hz_s, self.nadir_hz, self.ss_hz, self.t_rocof, self.t_nadir].map(opt));
        f.push(self.converged.map(|b| b.to_string()).unwrap_or_default());
        f.push(self.iterations.map(|n| n.to_string()).unwrap_or_default());
        f
    }
}

pub fn labeled_to_csv(rows: &[LabeledRow], opts: WriteOptions) -> Vec<u8> {
    csv_bytes(&LABELED_HEADER, rows.iter().map(|r| r.to_fields()), opts)
}

pub fn dataset_to_csv(ds: &Dataset, opts: WriteOptions) -> Vec<u8> {
    let rows: Vec<LabeledRow> = ds.records.iter().map(LabeledRow::from_record).collect();
    labeled_to_csv(&rows, opts)
}

pub fn labeled_from_csv(bytes: &[u8]) -> Result<Vec<LabeledRow>> {
    let h = &LABELED_HEADER;
    let mut rdr = reader(bytes);
    check_header(&mut rdr, h)?;
    records(&mut rdr)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let mut a = [0.0; 4];
            for (c, v) in a.iter_mut().enumerate() {
                *v = parse_f64(rec, row, c, h)?;
            }
            let label_s = rec.get(4).unwrap_or("").trim();
            let label = Label::parse(label_s).ok_or_else(|| Error::SchemaMismatch {
                row,
                column: "label".into(),
                message: format!("`{label_s}` is not one of 0, 1, invalid"),
            })?;
            Ok(LabeledRow {
                theta: GainVector::from_array(a),
                label,
                rocof_hz_s: parse_opt(rec, row, 5, h)?,
                nadir_hz: parse_opt(rec, row, 6, h)?,
                ss_hz: parse_opt(rec, row, 7, h)?,
                t_rocof: parse_opt(rec, row, 8, h)?,
                t_nadir: parse_opt(rec, row, 9, h)?,
                converged: parse_opt(rec, row, 10, h)?,
                iterations: parse_opt(rec, row, 11, h)?,
            })
        })
        .collect()
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledRow>> {
    labeled_from_csv(&read_file(path)?)
}

pub fn write_labeled(path: &Path, rows: &[LabeledRow], opts: WriteOptions) -> Result<()> {
    write_atomic(path, &labeled_to_csv(rows, opts))
}

/// Writes the dataset CSV and, next to it, `<path>.meta.json` with the full
/// records and generation metadata.
pub fn write_dataset(path: &Path, ds: &Dataset, opts: WriteOptions) -> Result<()> {
    write_atomic(path, &dataset_to_csv(ds, opts))?;
    let json = serde_json::to_vec_pretty(ds).expect("dataset serializes");
    write_atomic(&meta_path(path), &json)
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

pub fn dataset_from_json(bytes: &[u8]) -> Result<Dataset> {
    serde_json::from_slice(bytes).map_err(|e| Error::SchemaMismatch {
        row: e.line(),
        column: format!("col {}", e.column()),
        message: e.to_string(),
    })
}

/// Reads a dataset written by [`write_dataset`] from its metadata sidecar.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_json(&read_file(&meta_path(path))?)
}

// ---- trajectories ---------------------------------------------------------

pub fn trajectory_to_csv(traj: &Trajectory, with_tangents: bool, opts: WriteOptions) -> Result<Vec<u8>> {
    if with_tangents && traj.tangents.is_none() {
        return Err(Error::MissingTangents);
    }
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    if with_tangents {
        header.extend(TANGENT_HEADER);
    }
    let rows = (0..traj.len()).map(|n| {
        let s = traj.states[n];
        let mut f = vec![fmt_f64(traj.times[n]), fmt_f64(s.x1), fmt_f64(s.x2)];
        if with_tangents {
            let t = traj.tangents.as_ref().expect("checked")[n];
            for i in 0..4 {
                f.push(fmt_f64(t[0][i]));
                f.push(fmt_f64(t[1][i]));
            }
        }
        f
    });
    Ok(csv_bytes(&header, rows, opts))
}

pub fn trajectory_from_csv(bytes: &[u8]) -> Result<Trajectory> {
    let mut rdr = reader(bytes);
    let ncols = rdr
        .headers()
        .map_err(|e| Error::SchemaMismatch {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .len();
    let with_tangents = ncols == TRAJECTORY_HEADER.len() + TANGENT_HEADER.len();
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    if with_tangents {
        header.extend(TANGENT_HEADER);
    }
    check_header(&mut rdr, &header)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        tangents: with_tangents.then(Vec::new),
    };
    for (i, rec) in records(&mut rdr)?.iter().enumerate() {
        let row = i + 1;
        traj.times.push(parse_f64(rec, row, 0, &header)?);
        traj.states
            .push(State::new(parse_f64(rec, row, 1, &header)?, parse_f64(rec, row, 2, &header)?));
        if let Some(tangents) = traj.tangents.as_mut() {
            let mut t: Tangent = [[0.0; 4]; 2];
            for c in 0..4 {
                t[0][c] = parse_f64(rec, row, 3 + 2 * c, &header)?;
                t[1][c] = parse_f64(rec, row, 4 + 2 * c, &header)?;
            }
            tangents.push(t);
        }
    }
    Ok(traj)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, with_tangents: bool, opts: WriteOptions) -> Result<()> {
    write_atomic(path, &trajectory_to_csv(traj, with_tangents, opts)?)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    trajectory_from_csv(&read_file(path)?)
}

// ---- gradient tables ------------------------------------------------------

/// One row per criterion and gain component, tangent value next to the
/// finite-difference estimate.
pub fn grad_table_to_csv(fmad: &GradientSet, fd: &GradientSet, opts: WriteOptions) -> Vec<u8> {
    let mut rows = Vec::with_capacity(12);
    for c in Criterion::ALL {
        let (a, b) = (fmad.get(c), fd.get(c));
        for i in 0..4 {
            rows.push(vec![
                c.to_string(),
                THETA_HEADER[i].to_string(),
                fmt_f64(a[i]),
                fmt_f64(b[i]),
                fmt_f64(max_abs_pct_error(&a[i..=i], &b[i..=i])),
            ]);
        }
    }
    csv_bytes(&GRAD_HEADER, rows, opts)
}

// ---- bench ----------------------------------------------------------------

pub fn bench_to_csv(report: &ComparisonReport, opts: WriteOptions) -> Vec<u8> {
    let rows = report.rows.iter().map(|r| {
        vec![
            r.method.clone(),
            r.memory_bytes.to_string(),
            fmt_f64(r.time_s),
            fmt_f64(r.errors.x_tss),
            fmt_f64(r.errors.x_tnadir),
            fmt_f64(r.errors.x_trocof),
            fmt_f64(r.errors.g_nadir),
            fmt_f64(r.errors.g_rocof),
        ]
    });
    csv_bytes(&BENCH_HEADER, rows, opts)
}

pub fn write_bench(path: &Path, report: &ComparisonReport, opts: WriteOptions) -> Result<()> {
    write_atomic(path, &bench_to_csv(report, opts))
}
