//! Accuracy, timing and memory comparison of gradient methods over a batch.
//!
//! Every method yields, per gain vector, the state at the three critical
//! times and the gradient set. Errors are reported against a reference
//! method as maximum absolute percentage errors over the batch.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrateOptions, Integrated};
use crate::params::{GainVector, State, SystemParams};
use crate::sensitivity::{
    extract_gradients, finite_diff_gradients, Direction, Epsilon, FdScheme, GradientSet, PCT_FLOOR,
};

/// A gradient method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Augmented integration keeping the whole trajectory.
    Fmad,
    /// Augmented integration keeping only running maxima.
    FmadStream,
    FiniteDiff { scheme: FdScheme, eps: Epsilon },
}

impl Method {
    pub const FD_CENTRAL: Method = Method::FiniteDiff {
        scheme: FdScheme::Central,
        eps: Epsilon::Relative(1e-6),
    };
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fmad => f.write_str("fmad"),
            Method::FmadStream => f.write_str("fmad-stream"),
            Method::FiniteDiff { scheme, eps } => {
                let s = match scheme {
                    FdScheme::Forward => "fd-forward",
                    FdScheme::Central => "fd-central",
                };
                match eps {
                    Epsilon::Relative(e) => write!(f, "{s}:rel={e:e}"),
                    Epsilon::Absolute(e) => write!(f, "{s}:abs={e:e}"),
                }
            }
        }
    }
}

/// Accepts `fmad`, `fmad-stream`, `fd-central`, `fd-forward`, with an
/// optional `:rel=EPS` or `:abs=EPS` suffix on the finite-difference forms
/// (default `rel=1e-6`).
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, eps) = match s.split_once(':') {
            Some((h, e)) => (h, Some(e)),
            None => (s, None),
        };
        let scheme = match head {
            "fmad" if eps.is_none() => return Ok(Method::Fmad),
            "fmad-stream" if eps.is_none() => return Ok(Method::FmadStream),
            "fd-central" => FdScheme::Central,
            "fd-forward" => FdScheme::Forward,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        };
        let eps = match eps {
            None => Epsilon::Relative(1e-6),
            Some(e) => {
                let (kind, value) = e
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("bad epsilon `{e}`, expected rel=E or abs=E")))?;
                let v: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad epsilon value `{value}`")))?;
                match kind {
                    "rel" => Epsilon::Relative(v),
                    "abs" => Epsilon::Absolute(v),
                    _ => return Err(Error::Config(format!("bad epsilon kind `{kind}`"))),
                }
            }
        };
        Ok(Method::FiniteDiff { scheme, eps })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Per-sample output of a method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutput {
    pub x_tss: State,
    pub x_tnadir: State,
    pub x_trocof: State,
    pub gradients: GradientSet,
}

fn fmad_output(out: &Integrated, direction: Direction) -> Result<MethodOutput> {
    let s = out.summary();
    Ok(MethodOutput {
        x_tss: s.terminal.state,
        x_tnadir: s.nadir.state,
        x_trocof: s.rocof.state,
        gradients: extract_gradients(&s, direction)?,
    })
}

/// Runs one method over a batch, in parallel, preserving order.
///
/// The full-storage variant materializes every trajectory of the batch
/// before reading results, so its memory footprint is that of the batch.
pub fn run_method(method: Method, thetas: &[GainVector], p: &SystemParams, direction: Direction) -> Vec<Result<MethodOutput>> {
    match method {
        Method::Fmad | Method::FmadStream => {
            let opts = if method == Method::Fmad {
                IntegrateOptions::augmented()
            } else {
                IntegrateOptions::augmented().streaming()
            };
            let runs: Vec<Result<Integrated>> = thetas.par_iter().map(|t| integrate(t, p, &opts)).collect();
            runs.iter()
                .map(|r| r.as_ref().map_err(Clone::clone).and_then(|o| fmad_output(o, direction)))
                .collect()
        }
        Method::FiniteDiff { scheme, eps } => thetas
            .par_iter()
            .map(|t| {
                let fd = finite_diff_gradients(t, p, eps, scheme, direction)?;
                Ok(MethodOutput {
                    x_tss: fd.reference.terminal.state,
                    x_tnadir: fd.reference.nadir.state,
                    x_trocof: fd.reference.rocof.state,
                    gradients: fd.gradients,
                })
            })
            .collect(),
    }
}

/// `100 * ||v - r||_inf / max(||r||_inf, floor)`.
pub fn vector_pct_error(v: &[f64], r: &[f64]) -> f64 {
    assert_eq!(v.len(), r.len());
    let diff = v.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = r.iter().map(|b| b.abs()).fold(0.0, f64::max);
    100.0 * diff / scale.max(PCT_FLOOR)
}

/// Maximum absolute percentage errors of one method against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantityErrors {
    pub x_tss: f64,
    pub x_tnadir: f64,
    pub x_trocof: f64,
    pub g_nadir: f64,
    pub g_rocof: f64,
    pub g_ss: f64,
}

impl QuantityErrors {
    pub fn between(outputs: &[MethodOutput], reference: &[MethodOutput]) -> Self {
        let st = |s: &State| [s.x1, s.x2];
        let mut e = QuantityErrors::default();
        for (o, r) in outputs.iter().zip(reference) {
            e.x_tss = e.x_tss.max(vector_pct_error(&st(&o.x_tss), &st(&r.x_tss)));
            e.x_tnadir = e.x_tnadir.max(vector_pct_error(&st(&o.x_tnadir), &st(&r.x_tnadir)));
            e.x_trocof = e.x_trocof.max(vector_pct_error(&st(&o.x_trocof), &st(&r.x_trocof)));
            e.g_nadir = e.g_nadir.max(vector_pct_error(&o.gradients.nadir, &r.gradients.nadir));
            e.g_rocof = e.g_rocof.max(vector_pct_error(&o.gradients.rocof, &r.gradients.rocof));
            e.g_ss = e.g_ss.max(vector_pct_error(&o.gradients.ss, &r.gradients.ss));
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    /// Peak resident-set growth over the runs (bytes).
    pub memory_bytes: u64,
    /// Mean wall time per run (s).
    pub time_s: f64,
    pub errors: QuantityErrors,
    /// Samples for which the method failed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub batch_size: usize,
    pub runs: usize,
    pub rows: Vec<MethodRow>,
}

/// Current resident set size in bytes, from `/proc/self/status`.
pub fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Samples resident memory on a background thread at 1 ms cadence and
/// records the peak growth over the starting value.
pub struct PeakMemoryProbe {
    baseline: u64,
    peak: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl PeakMemoryProbe {
    pub fn start() -> Self {
        let baseline = resident_bytes().unwrap_or(0);
        let peak = Arc::new(AtomicU64::new(baseline));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (peak, stop) = (Arc::clone(&peak), Arc::clone(&stop));
            thread::spawn(move || loop {
                if let Some(rss) = resident_bytes() {
                    peak.fetch_max(rss, Ordering::Relaxed);
                }
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                thread::sleep(Duration::from_millis(1));
            })
        };
        PeakMemoryProbe {
            baseline,
            peak,
            stop,
            handle: Some(handle),
        }
    }

    /// Stops sampling and returns the peak growth in bytes.
    pub fn finish(mut self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        if let Some(rss) = resident_bytes() {
            self.peak.fetch_max(rss, Ordering::Relaxed);
        }
        self.peak.load(Ordering::Relaxed).saturating_sub(self.baseline)
    }
}

impl Drop for PeakMemoryProbe {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Runs `reference` and every method in `methods` sequentially, `runs` times
/// each, and tabulates mean time, peak memory growth and errors.
pub fn compare_methods(
    thetas: &[GainVector],
    p: &SystemParams,
    methods: &[Method],
    reference: Method,
    runs: usize,
    direction: Direction,
) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(Error::Degenerate("no methods to compare".into()));
    }
    if runs == 0 {
        return Err(Error::Degenerate("runs must be >= 1".into()));
    }
    p.validate()?;

    let timed = |m: Method| -> (Vec<Result<MethodOutput>>, f64, u64) {
        let mut total = 0.0;
        let mut peak = 0;
        let mut last = Vec::new();
        for _ in 0..runs {
            let probe = PeakMemoryProbe::start();
            let t0 = Instant::now();
            let out = run_method(m, thetas, p, direction);
            total += t0.elapsed().as_secs_f64();
            peak = peak.max(probe.finish());
            last = out;
        }
        (last, total / runs as f64, peak)
    };

    let (ref_out, ref_time, ref_mem) = timed(reference);
    let ref_ok: Vec<Option<MethodOutput>> = ref_out.into_iter().map(|r| r.ok()).collect();

    let mut rows = Vec::with_capacity(methods.len() + 1);
    let mut push_row = |m: Method, out: Vec<Result<MethodOutput>>, time_s: f64, memory_bytes: u64| {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut failures = 0;
        for (o, r) in out.into_iter().zip(&ref_ok) {
            match (o, r) {
                (Ok(o), Some(r)) => {
                    a.push(o);
                    b.push(*r);
                }
                _ => failures += 1,
            }
        }
        rows.push(MethodRow {
            method: m.to_string(),
            memory_bytes,
            time_s: time_s.max(f64::MIN_POSITIVE),
            errors: QuantityErrors::between(&a, &b),
            failures,
        });
    };

    let ref_again: Vec<Result<MethodOutput>> = ref_ok
        .iter()
        .map(|r| r.ok_or(Error::Degenerate("reference failed".into())))
        .collect();
    push_row(reference, ref_again, ref_time, ref_mem);
    for &m in methods.iter().filter(|m| **m != reference) {
        let (out, time_s, mem) = timed(m);
        push_row(m, out, time_s, mem);
    }

    Ok(ComparisonReport {
        reference: reference.to_string(),
        batch_size: thetas.len(),
        runs,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for s in ["fmad", "fmad-stream", "fd-central:rel=1e-6", "fd-forward:abs=1e-14"] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("fd-central".parse::<Method>().unwrap(), Method::FD_CENTRAL);
        assert!("fmad:abs=1".parse::<Method>().is_err());
        assert!("fd-central:foo=1".parse::<Method>().is_err());
        assert!("rk".parse::<Method>().is_err());
    }

    #[test]
    fn vector_error_uses_reference_scale() {
        assert_eq!(vector_pct_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((vector_pct_error(&[1.0, 2.2], &[1.0, 2.0]) - 10.0).abs() < 1e-9);
        // tiny components are judged against the vector's magnitude
        assert!(vector_pct_error(&[1.0, 1e-14], &[1.0, 1e-16]) < 1e-10);
    }

    #[test]
    fn reference_against_itself_is_exact() {
        let p = SystemParams::default().with_grid(1e-3, 5.0);
        let thetas = [GainVector::new(10.0, 20.0, -5.0, 3.0), GainVector::ZERO];
        let rep = compare_methods(&thetas, &p, &[Method::Fmad], Method::Fmad, 1, Direction::Stabilize).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].errors, QuantityErrors::default());
        assert!(rep.rows[0].time_s > 0.0);
    }

    #[test]
    fn streaming_and_full_give_identical_outputs() {
        let p = SystemParams::default().with_grid(1e-3, 5.0);
        let thetas = [GainVector::new(10.0, 20.0, -5.0, 3.0), GainVector::new(-40.0, 5.0, 30.0, -12.0)];
        let a = run_method(Method::Fmad, &thetas, &p, Direction::Destabilize);
        let b = run_method(Method::FmadStream, &thetas, &p, Direction::Destabilize);
        assert_eq!(a, b);
    }

    #[test]
    fn resident_memory_is_readable() {
        assert!(resident_bytes().unwrap_or(0) > 0);
    }
}
