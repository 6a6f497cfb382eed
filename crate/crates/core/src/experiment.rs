//! Parameter sweeps, global-clock-time histograms, synchronous/asynchronous
//! comparison tables, and run manifests.
//!
//! Grid points and histogram cells are isolated on disjoint substream
//! blocks, so results do not depend on evaluation order or worker count,
//! and a persisted manifest reproduces its outputs bit for bit.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::{rate_async, simulate_async};
use crate::error::{Error, Result};
use crate::par;
use crate::phys::{local_time_unit, CoherenceTime, PhysicalConstants, SystemParams};
use crate::rates::{rate_direct_transmission, rate_multilink_sync_det, rate_single_link_det};
use crate::sampling::{rate_multilink_sync_stoch, rate_single_link_stoch, RngStream};

/// Stream-id stride between grid points / histogram cells. Leaves room for
/// that many per-trial substreams inside each block.
pub const POINT_STREAM_STRIDE: u64 = 1 << 33;

/// Which scalar a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptVariable {
    Distance,
    NumLinks,
    TauMem,
    EtaQm,
}

/// Rate estimator driven at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SingleLinkDet,
    SingleLinkStoch,
    Direct,
    SyncDet,
    SyncStoch,
    Async,
}

impl Protocol {
    pub fn label(&self) -> &'static str {
        match self {
            Protocol::SingleLinkDet => "single_link_det",
            Protocol::SingleLinkStoch => "single_link_stoch",
            Protocol::Direct => "direct",
            Protocol::SyncDet => "sync_det",
            Protocol::SyncStoch => "sync_stoch",
            Protocol::Async => "async",
        }
    }
}

/// A sweep: one protocol evaluated over an ordered grid of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept_variable: SweptVariable,
    pub grid: Vec<f64>,
    pub base_params: SystemParams,
    pub protocol: Protocol,
}

impl SweepSpec {
    /// Rejects the whole spec if any grid point would violate the parameter
    /// invariants, before anything runs.
    pub fn validate(&self, constants: &PhysicalConstants) -> Result<()> {
        constants.validate()?;
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        for &value in &self.grid {
            self.params_at(value)?.validate()?;
        }
        Ok(())
    }

    /// The effective parameters at one grid value.
    pub fn params_at(&self, value: f64) -> Result<SystemParams> {
        let mut p = self.base_params.clone();
        match self.swept_variable {
            SweptVariable::Distance => p.total_distance_km = value,
            SweptVariable::NumLinks => {
                if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
                    return Err(Error::InvalidParameter(format!(
                        "num_links grid value must be a positive integer, got {value}"
                    )));
                }
                p.num_links = value as u32;
            }
            SweptVariable::TauMem => {
                let tau = CoherenceTime::from_seconds(value)?;
                p.tau_mem_a = tau;
                p.tau_mem_b = tau;
            }
            SweptVariable::EtaQm => p.eta_qm = value,
        }
        Ok(p)
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub rate_hz: f64,
    pub std_error_hz: f64,
    pub params: SystemParams,
}

/// Plot-ready rate-versus-x curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub protocol: Protocol,
    pub points: Vec<CurvePoint>,
}

impl RateCurve {
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate_hz).collect()
    }

    /// CSV with header
    /// `x,rate_hz,std_err_hz,protocol,n_links,tau_a_s,tau_b_s,eta_qm,eta_d,eta_bsm,eta_qr,seed`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "x", "rate_hz", "std_err_hz", "protocol", "n_links", "tau_a_s", "tau_b_s", "eta_qm",
            "eta_d", "eta_bsm", "eta_qr", "seed",
        ])
        .map_err(csv_error)?;
        for p in &self.points {
            w.write_record([
                fmt_f64(p.x),
                fmt_f64(p.rate_hz),
                fmt_f64(p.std_error_hz),
                self.protocol.label().to_string(),
                p.params.num_links.to_string(),
                fmt_f64(p.params.tau_mem_a.seconds()),
                fmt_f64(p.params.tau_mem_b.seconds()),
                fmt_f64(p.params.eta_qm),
                fmt_f64(p.params.eta_detector),
                fmt_f64(p.params.eta_bsm),
                fmt_f64(p.params.eta_qr),
                p.params.seed.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same double
    format!("{v}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Evaluates one protocol at one parameter point on the given stream block.
pub fn evaluate_protocol(
    protocol: Protocol,
    params: &SystemParams,
    constants: &PhysicalConstants,
    base: RngStream,
) -> Result<(f64, f64)> {
    Ok(match protocol {
        Protocol::SingleLinkDet => (rate_single_link_det(params, constants)?.rate_hz, 0.0),
        Protocol::Direct => (rate_direct_transmission(params, constants)?.rate_hz, 0.0),
        Protocol::SyncDet => (rate_multilink_sync_det(params, constants)?.rate_hz, 0.0),
        Protocol::SingleLinkStoch => {
            let est = rate_single_link_stoch(params, constants, base)?;
            (est.rate_hz, est.std_error_hz)
        }
        Protocol::SyncStoch => {
            let est = rate_multilink_sync_stoch(params, constants, base)?;
            (est.rate_hz, est.std_error_hz)
        }
        Protocol::Async => {
            let sim = simulate_async(params, constants, base)?;
            let est = rate_async(&sim, constants)?;
            (est.rate_hz, est.std_error_hz)
        }
    })
}

/// Runs a sweep; point `i` draws from stream block `i * POINT_STREAM_STRIDE`.
pub fn run_sweep(spec: &SweepSpec, constants: &PhysicalConstants) -> Result<RateCurve> {
    spec.validate(constants)?;
    let results = par::map_indexed(spec.grid.len() as u64, |i| -> Result<CurvePoint> {
        let x = spec.grid[i as usize];
        let params = spec.params_at(x)?;
        let base = RngStream::new(params.seed, i * POINT_STREAM_STRIDE);
        let (rate_hz, std_error_hz) = evaluate_protocol(spec.protocol, &params, constants, base)?;
        Ok(CurvePoint {
            x,
            rate_hz,
            std_error_hz,
            params,
        })
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RateCurve {
        protocol: spec.protocol,
        points,
    })
}

/// Binned distribution of `T_GC` samples; bin edges in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    /// Bins `samples` into `edges`. Edges must be strictly increasing and
    /// cover every sample; the last bin is closed on the right.
    pub fn from_samples(edges: Vec<f64>, samples: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "histogram edges must be at least two strictly increasing values".into(),
            ));
        }
        let lo = edges[0];
        let hi = *edges.last().unwrap();
        let mut counts = vec![0u64; edges.len() - 1];
        for &s in samples {
            if !(lo..=hi).contains(&s) {
                return Err(Error::Domain(format!(
                    "sample {s} outside histogram range [{lo}, {hi}]"
                )));
            }
            let last_bin = counts.len() - 1;
            let idx = match edges.binary_search_by(|e| e.partial_cmp(&s).unwrap()) {
                Ok(i) => i.min(last_bin),
                Err(i) => i - 1,
            };
            counts[idx.min(last_bin)] += 1;
        }
        Ok(Self {
            bin_edges: edges,
            total: samples.len() as u64,
            counts,
        })
    }

    /// `bins` logarithmically spaced edges from `lo` to `hi`.
    pub fn log_spaced_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
        if !(lo > 0.0 && hi > lo) || bins < 1 {
            return Err(Error::InvalidParameter(format!(
                "log-spaced edges need 0 < lo < hi and bins >= 1, got [{lo}, {hi}] x {bins}"
            )));
        }
        let (la, lb) = (lo.ln(), hi.ln());
        let mut edges: Vec<f64> = (0..=bins)
            .map(|i| (la + (lb - la) * i as f64 / bins as f64).exp())
            .collect();
        // pin the ends against rounding
        edges[0] = lo;
        edges[bins] = hi;
        Ok(edges)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Probability per bin, `count/total`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    /// CSV with header `bin_lo_s,bin_hi_s,count,probability`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo_s", "bin_hi_s", "count", "probability"])
            .map_err(csv_error)?;
        for (i, &c) in self.counts.iter().enumerate() {
            w.write_record([
                fmt_f64(self.bin_edges[i]),
                fmt_f64(self.bin_edges[i + 1]),
                c.to_string(),
                fmt_f64(if self.total > 0 {
                    c as f64 / self.total as f64
                } else {
                    0.0
                }),
            ])
            .map_err(csv_error)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

/// What varies across histogram cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramVariation {
    /// One cell per link count.
    NumLinks(Vec<u32>),
    /// One cell per coherence time (seconds, applied to both memories).
    TauMem(Vec<f64>),
}

impl HistogramVariation {
    fn cells(&self, base: &SystemParams) -> Result<Vec<(String, SystemParams)>> {
        let mut out = Vec::new();
        match self {
            HistogramVariation::NumLinks(ns) => {
                for &n in ns {
                    let mut p = base.clone();
                    p.num_links = n;
                    p.validate()?;
                    out.push((format!("n={n}"), p));
                }
            }
            HistogramVariation::TauMem(taus) => {
                for &tau_s in taus {
                    let mut p = base.clone();
                    let tau = CoherenceTime::from_seconds(tau_s)?;
                    p.tau_mem_a = tau;
                    p.tau_mem_b = tau;
                    p.validate()?;
                    out.push((format!("tau={tau_s:e}"), p));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter(
                "histogram variation lists no cells".into(),
            ));
        }
        Ok(out)
    }
}

/// One histogram cell: the binned `T_GC` distribution of the first
/// `successes` successful trials in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgcCell {
    pub label: String,
    pub params: SystemParams,
    pub histogram: Histogram,
    pub samples_s: Vec<f64>,
    pub successes: u64,
    pub trials_used: u64,
    /// The trial budget ran out before reaching the target.
    pub shortfall: bool,
}

impl TgcCell {
    pub fn mean_t_gc_s(&self) -> f64 {
        self.samples_s.iter().sum::<f64>() / self.samples_s.len().max(1) as f64
    }

    /// Sample standard deviation of `T_GC` in seconds.
    pub fn std_t_gc_s(&self) -> f64 {
        sample_std(&self.samples_s)
    }

    /// Sample standard deviation of `log10(T_GC)`: the spread of the
    /// distribution as drawn on a logarithmic axis.
    pub fn std_log10_t_gc(&self) -> f64 {
        let logs: Vec<f64> = self.samples_s.iter().map(|t| t.log10()).collect();
        sample_std(&logs)
    }
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0);
    var.sqrt()
}

const HISTOGRAM_ROUND: u64 = 65_536;
const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// Runs asynchronous trials per cell until `target_successes` successes are
/// recorded or `trial_budget` trials are spent, then histograms the `T_GC`
/// samples. Cell `v` draws from stream block `v * POINT_STREAM_STRIDE`.
///
/// Without explicit edges, bins are logarithmic over `[t', 10 ms]` widened
/// as needed to cover the observed samples.
pub fn collect_tgc_histograms(
    base_params: &SystemParams,
    constants: &PhysicalConstants,
    variation: &HistogramVariation,
    target_successes: u64,
    trial_budget: u64,
    edges: Option<&[f64]>,
) -> Result<Vec<TgcCell>> {
    if target_successes < 1 {
        return Err(Error::InvalidParameter(
            "target_successes must be >= 1".into(),
        ));
    }
    let cells = variation.cells(base_params)?;
    let mut out = Vec::with_capacity(cells.len());
    for (v, (label, params)) in cells.into_iter().enumerate() {
        let base = RngStream::new(params.seed, v as u64 * POINT_STREAM_STRIDE);
        let (samples, trials_used) =
            collect_cell_samples(&params, constants, base, target_successes, trial_budget)?;
        let successes = samples.len() as u64;
        let hist_edges = match edges {
            Some(e) => e.to_vec(),
            None => default_edges(&params, constants, &samples)?,
        };
        let histogram = Histogram::from_samples(hist_edges, &samples)?;
        out.push(TgcCell {
            label,
            params,
            histogram,
            samples_s: samples,
            successes,
            trials_used,
            shortfall: successes < target_successes,
        });
    }
    Ok(out)
}

fn default_edges(
    params: &SystemParams,
    constants: &PhysicalConstants,
    samples: &[f64],
) -> Result<Vec<f64>> {
    let t_prime = local_time_unit(params, constants);
    let mut lo = t_prime;
    let mut hi: f64 = 10e-3;
    if let (Some(min), Some(max)) = (
        samples.iter().copied().reduce(f64::min),
        samples.iter().copied().reduce(f64::max),
    ) {
        lo = lo.min(min * (1.0 - 1e-9));
        hi = hi.max(max * (1.0 + 1e-9));
    }
    Histogram::log_spaced_edges(lo, hi, DEFAULT_HISTOGRAM_BINS)
}

/// First `target` successful `T_GC`s in trial order, plus how many trials
/// were consumed. Deterministic in (seed, params) alone: trial `i` owns
/// substream `TRIAL_STREAM_BASE + i` regardless of batching.
fn collect_cell_samples(
    params: &SystemParams,
    constants: &PhysicalConstants,
    base: RngStream,
    target: u64,
    trial_budget: u64,
) -> Result<(Vec<f64>, u64)> {
    let mut samples = Vec::with_capacity(target.min(1 << 20) as usize);
    let mut next_trial = 0u64;
    while (samples.len() as u64) < target && next_trial < trial_budget {
        let round = HISTOGRAM_ROUND.min(trial_budget - next_trial);
        let mut round_params = params.clone();
        round_params.num_trials = round;
        // reuse the batched engine by shifting the trial base per round
        let sim = simulate_async(
            &round_params,
            constants,
            base.substream(next_trial),
        )?;
        for &t in &sim.t_gc_samples_s {
            if (samples.len() as u64) < target {
                samples.push(t);
            }
        }
        next_trial += round;
    }
    Ok((samples, next_trial))
}

/// One row of the synchronous/asynchronous paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncAsyncPoint {
    pub distance_km: f64,
    pub r_sync_hz: f64,
    /// `None` when the asynchronous simulation produced no successes.
    pub r_async_hz: Option<f64>,
    /// `None` whenever either rate is zero or undefined.
    pub ratio: Option<f64>,
}

/// Paired sweep of the synchronous estimator and the asynchronous engine on
/// matched substreams: both sides of point `i` share stream block `i`, so
/// their four bracket means are computed from identical draws.
pub fn compare_sync_async(
    params: &SystemParams,
    constants: &PhysicalConstants,
    distance_grid: &[f64],
) -> Result<Vec<SyncAsyncPoint>> {
    if distance_grid.is_empty() {
        return Err(Error::InvalidParameter("distance grid is empty".into()));
    }
    let rows = par::map_indexed(distance_grid.len() as u64, |i| -> Result<SyncAsyncPoint> {
        let mut p = params.clone();
        p.total_distance_km = distance_grid[i as usize];
        p.validate()?;
        let base = RngStream::new(p.seed, i * POINT_STREAM_STRIDE);
        let sync = rate_multilink_sync_stoch(&p, constants, base)?;
        let sim = simulate_async(&p, constants, base)?;
        let r_async = match rate_async(&sim, constants) {
            Ok(est) => Some(est.rate_hz),
            Err(Error::NoSuccesses { .. }) => None,
            Err(e) => return Err(e),
        };
        let ratio = match (sync.rate_hz, r_async) {
            (s, Some(a)) if s > 0.0 && a > 0.0 => Some(a / s),
            _ => None,
        };
        Ok(SyncAsyncPoint {
            distance_km: p.total_distance_km,
            r_sync_hz: sync.rate_hz,
            r_async_hz: r_async,
            ratio,
        })
    });
    rows.into_iter().collect()
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// The reproducible unit of work a manifest captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestTask {
    Rate {
        protocol: Protocol,
        params: SystemParams,
    },
    Sweep {
        spec: SweepSpec,
    },
    TgcHistograms {
        base_params: SystemParams,
        variation: HistogramVariation,
        target_successes: u64,
        trial_budget: u64,
    },
}

impl ManifestTask {
    fn seed(&self) -> u64 {
        match self {
            ManifestTask::Rate { params, .. } => params.seed,
            ManifestTask::Sweep { spec } => spec.base_params.seed,
            ManifestTask::TgcHistograms { base_params, .. } => base_params.seed,
        }
    }
}

/// Named output file produced by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub label: String,
    pub path: String,
}

/// Everything needed to reproduce a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub constants: PhysicalConstants,
    pub task: ManifestTask,
    pub outputs: Vec<ManifestOutput>,
}

impl RunManifest {
    pub fn new(constants: PhysicalConstants, task: ManifestTask) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed: task.seed(),
            constants,
            task,
            outputs: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        if self.seed != self.task.seed() {
            return Err(Error::Manifest(format!(
                "seed {} does not match the task's seed {}",
                self.seed,
                self.task.seed()
            )));
        }
        Ok(())
    }
}

/// Writes the manifest as JSON, atomically: the target path either keeps its
/// old content or receives the complete new document.
pub fn write_run_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    let json = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::Manifest(format!("serialization failed: {e}")))?;
    let tmp = path.with_extension("json.tmp");
    let mut file = std::fs::File::create(&tmp)?;
    if let Err(e) = file.write_all(&json).and_then(|_| file.sync_all()) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    drop(file);
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// Loads and validates a manifest; documents without a seed or with an
/// unknown schema are rejected.
pub fn load_run_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(path)?;
    let manifest: RunManifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Manifest(format!("invalid manifest: {e}")))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Re-executes a manifest's task, returning labelled CSV documents. Two
/// executions of the same manifest are byte-identical.
pub fn execute_manifest_task(manifest: &RunManifest) -> Result<Vec<(String, Vec<u8>)>> {
    manifest.validate()?;
    match &manifest.task {
        ManifestTask::Rate { protocol, params } => {
            params.validate()?;
            let base = RngStream::new(params.seed, 0);
            let (rate_hz, std_error_hz) =
                evaluate_protocol(*protocol, params, &manifest.constants, base)?;
            let curve = RateCurve {
                protocol: *protocol,
                points: vec![CurvePoint {
                    x: params.total_distance_km,
                    rate_hz,
                    std_error_hz,
                    params: params.clone(),
                }],
            };
            Ok(vec![("rate".to_string(), curve.to_csv()?)])
        }
        ManifestTask::Sweep { spec } => {
            let curve = run_sweep(spec, &manifest.constants)?;
            Ok(vec![("sweep".to_string(), curve.to_csv()?)])
        }
        ManifestTask::TgcHistograms {
            base_params,
            variation,
            target_successes,
            trial_budget,
        } => {
            let cells = collect_tgc_histograms(
                base_params,
                &manifest.constants,
                variation,
                *target_successes,
                *trial_budget,
                None,
            )?;
            cells
                .into_iter()
                .map(|c| Ok((c.label.clone(), c.histogram.to_csv()?)))
                .collect()
        }
    }
}
