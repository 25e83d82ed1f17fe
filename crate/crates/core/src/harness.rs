//! Bootstrap experiments: run every detector over replicate streams, score
//! detections against the true drift points and write count tables,
//! histograms and a manifest that reproduces the run.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundTable;
use crate::detectors::{Ddm, DdmOci, DdmParams, Detector, DetectorParams, Lfr, Method, Nfr};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stream::{generate_stream, scenario, StreamConfig};

pub const DEFAULT_BIN_WIDTH: u64 = 200;
pub const DEFAULT_REPLICATES: u32 = 100;
pub const DEFAULT_LENGTH: u64 = 10_000;

/// Parameters for all four methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub lfr: DetectorParams,
    pub nfr: DetectorParams,
    pub ddm: DdmParams,
    pub ddm_oci: DdmParams,
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        self.lfr.validate()?;
        self.nfr.validate()?;
        self.ddm.validate()?;
        self.ddm_oci.validate()
    }

    /// Every significance level LFR looks up, deduplicated.
    pub fn lfr_alphas(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lfr.delta.iter().chain(&self.lfr.epsilon).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

pub const PRESETS: [&str; 4] = [
    "paper-synthetic",
    "paper-public",
    "paper-public-hyperplane",
    "paper-public-usenet",
];

/// Named parameter sets. `paper-synthetic` is the setting used for the
/// synthetic scenarios; the `paper-public*` sets are the per-dataset
/// settings for SEA (the default), Hyperplane and USENET.
pub fn preset(name: &str) -> Result<MethodParams> {
    let lfr_eps = match name {
        "paper-synthetic" => 1e-5,
        "paper-public" | "paper-public-sea" | "paper-public-hyperplane" | "paper-public-usenet" => 1e-4,
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    let (oci_warn, oci_detect) = match name {
        "paper-public-hyperplane" => (10.0, 30.0),
        "paper-public-usenet" => (2.0, 3.0),
        _ => (10.0, 20.0),
    };
    Ok(MethodParams {
        lfr: DetectorParams::uniform(0.9, 0.01, lfr_eps)?,
        nfr: DetectorParams::uniform(0.9, 0.025, 1e-3)?,
        ddm: DdmParams::new(2.0, 3.0, 0.9)?,
        ddm_oci: DdmParams::new(oci_warn, oci_detect, 0.9)?,
    })
}

/// Where replicate streams come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    Scenario { name: String, length: u64 },
    Explicit(StreamConfig),
}

impl StreamSource {
    /// Stream configuration for one replicate seed.
    pub fn config(&self, seed: u64) -> Result<StreamConfig> {
        match self {
            StreamSource::Scenario { name, length } => scenario(name)?.config(*length, seed),
            StreamSource::Explicit(c) => {
                c.validate()?;
                Ok(c.with_seed(seed))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: StreamSource,
    pub preset: Option<String>,
    pub params: MethodParams,
    pub methods: Vec<Method>,
    pub replicates: u32,
    pub bin_width: u64,
    pub true_window_bins: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// All four methods with a named preset and default scoring.
    pub fn from_preset(source: StreamSource, preset_name: &str, replicates: u32, seed: u64) -> Result<Self> {
        Ok(Self {
            source,
            preset: Some(preset_name.to_string()),
            params: preset(preset_name)?,
            methods: Method::ALL.to_vec(),
            replicates,
            bin_width: DEFAULT_BIN_WIDTH,
            true_window_bins: 1,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParam("replicates must be >= 1".into()));
        }
        if self.bin_width == 0 || self.true_window_bins == 0 {
            return Err(Error::InvalidParam("bin width and true window must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParam("no methods selected".into()));
        }
        self.params.validate()?;
        self.source.config(0).map(|_| ())
    }

    pub fn replicate_seed(&self, replicate: u32) -> u64 {
        derive_seed(self.seed, replicate as u64)
    }

    /// Configuration error unless `table` can serve every LFR lookup.
    pub fn check_table(&self, table: Option<&BoundTable>) -> Result<()> {
        if !self.methods.contains(&Method::Lfr) {
            return Ok(());
        }
        let table = table.ok_or_else(|| Error::InvalidParam("LFR needs a bound table".into()))?;
        for alpha in self.params.lfr_alphas() {
            table.alpha_index(alpha)?;
        }
        for &eta in &self.params.lfr.eta {
            if eta != table.eta() {
                return Err(Error::InvalidParam(format!(
                    "LFR eta {eta} but the bound table was built for {}",
                    table.eta()
                )));
            }
        }
        Ok(())
    }
}

/// Every drift signal of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub method: Method,
    pub replicate: u32,
    pub detections: Vec<u64>,
    pub drift_times: Vec<u64>,
}

pub fn build_detector(
    method: Method,
    params: &MethodParams,
    table: Option<&Arc<BoundTable>>,
) -> Result<Box<dyn Detector>> {
    Ok(match method {
        Method::Lfr => {
            let table = table.ok_or_else(|| Error::InvalidParam("LFR needs a bound table".into()))?;
            Box::new(Lfr::new(params.lfr, Arc::clone(table))?)
        }
        Method::Nfr => Box::new(Nfr::new(params.nfr)?),
        Method::Ddm => Box::new(Ddm::new(params.ddm)?),
        Method::DdmOci => Box::new(DdmOci::new(params.ddm_oci)?),
    })
}

/// Run all replicates. Records come back ordered by replicate, then by
/// the configured method order, whatever the thread count.
pub fn run_experiment(config: &ExperimentConfig, table: Option<Arc<BoundTable>>) -> Result<Vec<DetectionRecord>> {
    config.validate()?;
    config.check_table(table.as_deref())?;
    let per_rep: Vec<Result<Vec<DetectionRecord>>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(config, table.as_ref(), rep))
        .collect();
    let mut out = Vec::with_capacity(config.replicates as usize * config.methods.len());
    for r in per_rep {
        out.extend(r?);
    }
    Ok(out)
}

fn run_replicate(config: &ExperimentConfig, table: Option<&Arc<BoundTable>>, rep: u32) -> Result<Vec<DetectionRecord>> {
    let stream = generate_stream(&config.source.config(config.replicate_seed(rep))?)?;
    config
        .methods
        .iter()
        .map(|&method| {
            let mut det = build_detector(method, &config.params, table)?;
            let detections = stream
                .pairs
                .iter()
                .filter_map(|&(y, yhat)| {
                    let o = det.step(y, yhat);
                    o.is_drift().then_some(o.t)
                })
                .collect();
            Ok(DetectionRecord {
                method,
                replicate: rep,
                detections,
                drift_times: stream.drift_times.clone(),
            })
        })
        .collect()
}

/// Scores for one method.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodScore {
    /// Replicates with at least one detection in each drift's true window.
    pub true_per_drift: Vec<u64>,
    pub true_detections: u64,
    pub false_detections: u64,
    /// Everything else: late detections, extra detections inside a true
    /// window, and detections at the drift index itself.
    pub delayed_detections: u64,
    pub total_detections: u64,
    /// Bin start (1-based time) to detection count.
    pub histogram: BTreeMap<u64, u64>,
    /// Delay of the first in-window detection, per replicate and drift.
    pub delays: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub bin_width: u64,
    pub true_window: u64,
    pub methods: BTreeMap<Method, MethodScore>,
}

/// Time ranges used for scoring one drift point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftWindows {
    /// First step counted as a false detection.
    pub false_from: u64,
    pub drift_time: u64,
    /// True detections satisfy `drift_time < t <= true_until`.
    pub true_until: u64,
}

/// False periods run from the start of the stream (first drift) or from
/// the middle of the preceding concept (later drifts) up to the drift.
pub fn drift_windows(drift_times: &[u64], true_window: u64) -> Vec<DriftWindows> {
    drift_times
        .iter()
        .enumerate()
        .map(|(i, &d)| DriftWindows {
            false_from: if i == 0 { 1 } else { (drift_times[i - 1] + d) / 2 },
            drift_time: d,
            true_until: d + true_window,
        })
        .collect()
}

pub fn score(records: &[DetectionRecord], bin_width: u64, true_window_bins: u64) -> Result<ScoreCard> {
    if records.is_empty() {
        return Err(Error::InvalidParam("no detection records to score".into()));
    }
    if bin_width == 0 || true_window_bins == 0 {
        return Err(Error::InvalidParam("bin width and true window must be >= 1".into()));
    }
    let true_window = bin_width * true_window_bins;
    let mut card = ScoreCard {
        bin_width,
        true_window,
        methods: BTreeMap::new(),
    };
    for rec in records {
        let windows = drift_windows(&rec.drift_times, true_window);
        let s = card.methods.entry(rec.method).or_default();
        if s.true_per_drift.len() < windows.len() {
            s.true_per_drift.resize(windows.len(), 0);
        }
        let mut claimed = vec![false; windows.len()];
        for &t in &rec.detections {
            s.total_detections += 1;
            *s.histogram.entry((t - 1) / bin_width * bin_width + 1).or_default() += 1;
            let mut kind = Kind::Delayed;
            for (i, w) in windows.iter().enumerate() {
                if t > w.drift_time && t <= w.true_until {
                    if !claimed[i] {
                        claimed[i] = true;
                        s.delays.push(t - w.drift_time);
                        kind = Kind::True(i);
                    }
                    break;
                }
                if t >= w.false_from && t < w.drift_time {
                    kind = Kind::False;
                    break;
                }
            }
            match kind {
                Kind::True(i) => s.true_per_drift[i] += 1,
                Kind::False => s.false_detections += 1,
                Kind::Delayed => s.delayed_detections += 1,
            }
        }
    }
    for s in card.methods.values_mut() {
        s.true_detections = s.true_per_drift.iter().sum();
    }
    Ok(card)
}

enum Kind {
    True(usize),
    False,
    Delayed,
}

pub const COUNTS_CSV: &str = "counts.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const DETECTIONS_CSV: &str = "detections.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Identity of the bound table a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub fingerprint: String,
    pub eta: f64,
    pub start: f64,
    pub mc_samples: u64,
    pub seed: u64,
}

impl TableInfo {
    pub fn of(table: &BoundTable) -> Self {
        Self {
            fingerprint: table.fingerprint(),
            eta: table.eta(),
            start: table.start(),
            mc_samples: table.mc_samples(),
            seed: table.seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub replicate_seeds: Vec<u64>,
    pub table: Option<TableInfo>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, table: Option<&BoundTable>) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            replicate_seeds: (0..config.replicates).map(|r| config.replicate_seed(r)).collect(),
            table: table.map(TableInfo::of),
        }
    }
}

pub fn parse_manifest(bytes: &[u8]) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_slice(bytes).map_err(|e| Error::InvalidParam(format!("manifest: {e}")))?;
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::InvalidParam(format!(
            "unsupported manifest version {}",
            m.format_version
        )));
    }
    m.config.validate()?;
    if m.replicate_seeds.len() != m.config.replicates as usize {
        return Err(Error::InvalidParam(
            "replicate seed list does not match the replicate count".into(),
        ));
    }
    Ok(m)
}

pub fn counts_csv_bytes(card: &ScoreCard) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(
        out,
        "method,true_detections,false_detections,delayed_detections,total_detections"
    )
    .unwrap();
    for (m, s) in &card.methods {
        writeln!(
            out,
            "{m},{},{},{},{}",
            s.true_detections, s.false_detections, s.delayed_detections, s.total_detections
        )
        .unwrap();
    }
    out
}

pub fn histogram_csv_bytes(card: &ScoreCard) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "method,bin_start,bin_end,count").unwrap();
    for (m, s) in &card.methods {
        for (&start, &count) in &s.histogram {
            writeln!(out, "{m},{start},{},{count}", start + card.bin_width - 1).unwrap();
        }
    }
    out
}

pub fn detections_csv_bytes(records: &[DetectionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "method,replicate,t").unwrap();
    for r in records {
        for t in &r.detections {
            writeln!(out, "{},{},{t}", r.method, r.replicate).unwrap();
        }
    }
    out
}

/// Rebuild records from `detections.csv` and the manifest that produced it.
pub fn parse_detections_csv(bytes: &[u8], manifest: &RunManifest) -> Result<Vec<DetectionRecord>> {
    let config = &manifest.config;
    let drift_times = config.source.config(0)?.drift_times();
    let mut records: Vec<DetectionRecord> = (0..config.replicates)
        .flat_map(|rep| config.methods.iter().map(move |&method| (rep, method)))
        .map(|(replicate, method)| DetectionRecord {
            method,
            replicate,
            detections: Vec::new(),
            drift_times: drift_times.clone(),
        })
        .collect();
    let n_methods = config.methods.len();
    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| Error::InvalidParam(format!("detections: {e}")))?;
    if header.iter().collect::<Vec<_>>() != ["method", "replicate", "t"] {
        return Err(Error::InvalidParam(
            "detections: expected header method,replicate,t".into(),
        ));
    }
    for row in rdr.records() {
        let row = row.map_err(|e| Error::InvalidParam(format!("detections: {e}")))?;
        let bad = || Error::InvalidParam(format!("detections: bad row {:?}", row.iter().collect::<Vec<_>>()));
        if row.len() != 3 {
            return Err(bad());
        }
        let method: Method = row[0].parse().map_err(|_| bad())?;
        let rep: u32 = row[1].parse().map_err(|_| bad())?;
        let t: u64 = row[2].parse().map_err(|_| bad())?;
        let mi = config.methods.iter().position(|&m| m == method).ok_or_else(bad)?;
        if rep >= config.replicates || t == 0 {
            return Err(bad());
        }
        let rec = &mut records[rep as usize * n_methods + mi];
        if rec.detections.last().is_some_and(|&last| last >= t) {
            return Err(bad());
        }
        rec.detections.push(t);
    }
    Ok(records)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write the score tables only.
pub fn emit_scores(dir: &Path, card: &ScoreCard) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(COUNTS_CSV), &counts_csv_bytes(card))?;
    write_file(&dir.join(HISTOGRAM_CSV), &histogram_csv_bytes(card))
}

/// Write counts, histogram, raw detections and the run manifest.
pub fn emit_report(dir: &Path, manifest: &RunManifest, records: &[DetectionRecord], card: &ScoreCard) -> Result<()> {
    emit_scores(dir, card)?;
    write_file(&dir.join(DETECTIONS_CSV), &detections_csv_bytes(records))?;
    let path = dir.join(MANIFEST_JSON);
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    write_file(&path, text.as_bytes())
}

/// Re-score a report directory from its manifest and raw detections.
pub fn rescore_dir(dir: &Path) -> Result<ScoreCard> {
    let mpath = dir.join(MANIFEST_JSON);
    let manifest = parse_manifest(&std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?;
    let dpath = dir.join(DETECTIONS_CSV);
    let records = parse_detections_csv(&std::fs::read(&dpath).map_err(|e| Error::io(&dpath, e))?, &manifest)?;
    score(&records, manifest.config.bin_width, manifest.config.true_window_bins)
}
