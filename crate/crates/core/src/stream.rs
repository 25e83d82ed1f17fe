//! Synthetic `(y, yhat)` streams sampled from confusion probability matrices.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{ConfusionProbMatrix, Label};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub cp: ConfusionProbMatrix,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub concepts: Vec<ConceptSpec>,
    pub seed: u64,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.concepts.is_empty() {
            return Err(Error::InvalidParam("a stream needs at least one concept".into()));
        }
        if self.concepts.iter().any(|c| c.length == 0) {
            return Err(Error::InvalidParam("concept lengths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.concepts.iter().map(|c| c.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First step (1-based) governed by each new concept.
    pub fn drift_times(&self) -> Vec<u64> {
        let mut t = 0;
        let mut out = Vec::new();
        for (i, c) in self.concepts.iter().enumerate() {
            if i > 0 {
                out.push(t + 1);
            }
            t += c.length;
        }
        out
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Joint draw of `(y, yhat)` with probability `cp[yhat][y]`, one uniform per
/// draw over the fixed cell order TN, FN, FP, TP.
pub fn sample_pair(cp: &ConfusionProbMatrix, rng: &mut SimRng) -> (Label, Label) {
    const CELLS: [(Label, Label); 4] = [
        (Label::Zero, Label::Zero),
        (Label::One, Label::Zero),
        (Label::Zero, Label::One),
        (Label::One, Label::One),
    ];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = CELLS[3];
    for (y, yhat) in CELLS {
        let p = cp.get(yhat, y);
        if p > 0.0 {
            acc += p;
            last = (y, yhat);
            if u < acc {
                return (y, yhat);
            }
        }
    }
    // rounding left the cumulative sum a hair under 1
    last
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedStream {
    /// `pairs[i]` is `(y, yhat)` at step `t = i + 1`.
    pub pairs: Vec<(Label, Label)>,
    pub drift_times: Vec<u64>,
}

pub fn generate_stream(config: &StreamConfig) -> Result<GeneratedStream> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut pairs = Vec::with_capacity(config.len() as usize);
    for c in &config.concepts {
        for _ in 0..c.length {
            pairs.push(sample_pair(&c.cp, &mut rng));
        }
    }
    Ok(GeneratedStream {
        pairs,
        drift_times: config.drift_times(),
    })
}

/// Confusion matrix with exact rational entries `num[pred][true] / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalCp {
    pub num: [[i64; 2]; 2],
    pub den: i64,
}

impl RationalCp {
    pub fn to_cp(self) -> ConfusionProbMatrix {
        let d = self.den as f64;
        let p = self.num.map(|row| row.map(|v| v as f64 / d));
        ConfusionProbMatrix::new(p).expect("builtin matrices are valid")
    }
}

/// A two-concept drift scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub name: &'static str,
    pub before: RationalCp,
    pub after: RationalCp,
    /// False for variants that do not appear verbatim in the literature.
    pub as_published: bool,
}

impl Scenario {
    /// Two concepts splitting `length` steps at the midpoint.
    pub fn config(&self, length: u64, seed: u64) -> Result<StreamConfig> {
        if length < 2 {
            return Err(Error::InvalidParam("scenario length must be >= 2".into()));
        }
        let first = length / 2;
        Ok(StreamConfig {
            concepts: vec![
                ConceptSpec {
                    cp: self.before.to_cp(),
                    length: first,
                },
                ConceptSpec {
                    cp: self.after.to_cp(),
                    length: length - first,
                },
            ],
            seed,
        })
    }
}

const fn rcp(num: [[i64; 2]; 2], den: i64) -> RationalCp {
    RationalCp { num, den }
}

/// The six synthetic scenarios plus `Imbalance3-fixed`.
///
/// `Imbalance3` is shipped with its two matrices identical, as published;
/// `Imbalance3-fixed` swaps in a second matrix that keeps the class ratio
/// while lowering tpr, ppv and accuracy.
pub fn builtin_scenarios() -> BTreeMap<&'static str, Scenario> {
    let list = [
        Scenario {
            name: "Balance1",
            before: rcp([[8, 2], [2, 8]], 20),
            after: rcp([[6, 2], [4, 8]], 20),
            as_published: true,
        },
        Scenario {
            name: "Balance2",
            before: rcp([[7, 1], [3, 9]], 20),
            after: rcp([[8, 2], [2, 8]], 20),
            as_published: true,
        },
        Scenario {
            name: "Balance3",
            before: rcp([[6, 4], [4, 6]], 20),
            after: rcp([[8, 4], [2, 6]], 20),
            as_published: true,
        },
        Scenario {
            name: "Imbalance1",
            before: rcp([[10, 5], [5, 10]], 30),
            after: rcp([[26, 1], [1, 2]], 30),
            as_published: true,
        },
        Scenario {
            name: "Imbalance2",
            before: rcp([[13, 1], [3, 3]], 20),
            after: rcp([[15, 3], [1, 1]], 20),
            as_published: true,
        },
        Scenario {
            name: "Imbalance3",
            before: rcp([[12, 3], [3, 2]], 20),
            after: rcp([[12, 3], [3, 2]], 20),
            as_published: true,
        },
        Scenario {
            name: "Imbalance3-fixed",
            before: rcp([[12, 3], [3, 2]], 20),
            after: rcp([[11, 4], [4, 1]], 20),
            as_published: false,
        },
    ];
    list.into_iter().map(|s| (s.name, s)).collect()
}

pub fn scenario(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_values()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

pub const STREAM_CSV: &str = "stream.csv";
pub const STREAM_META: &str = "stream.json";

/// Sidecar record written next to `stream.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub format_version: u32,
    pub scenario: Option<String>,
    pub config: StreamConfig,
    pub drift_times: Vec<u64>,
}

pub fn stream_csv_bytes(pairs: &[(Label, Label)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pairs.len() * 10);
    out.extend_from_slice(b"t,y,yhat\n");
    for (i, (y, yhat)) in pairs.iter().enumerate() {
        out.extend_from_slice(format!("{},{},{}\n", i + 1, y, yhat).as_bytes());
    }
    out
}

/// Parse a `t,y,yhat` CSV. Rows must be numbered 1, 2, 3, ...
pub fn parse_stream_csv(bytes: &[u8]) -> Result<Vec<(Label, Label)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| Error::StreamFormat(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["t", "y", "yhat"] {
        return Err(Error::StreamFormat(format!("expected header t,y,yhat, got {cols:?}")));
    }
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::StreamFormat(e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::StreamFormat(format!("row {} has {} fields", i + 1, rec.len())));
        }
        let t: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::StreamFormat(format!("row {}: bad t `{}`", i + 1, &rec[0])))?;
        if t != i as u64 + 1 {
            return Err(Error::StreamFormat(format!(
                "row {}: expected t={}, got {t}",
                i + 1,
                i + 1
            )));
        }
        let label = |s: &str| -> Result<Label> {
            match s.trim() {
                "0" => Ok(Label::Zero),
                "1" => Ok(Label::One),
                other => Err(Error::StreamFormat(format!("row {}: bad label `{other}`", i + 1))),
            }
        };
        pairs.push((label(&rec[1])?, label(&rec[2])?));
    }
    Ok(pairs)
}

pub fn parse_stream_meta(bytes: &[u8]) -> Result<StreamMeta> {
    let meta: StreamMeta = serde_json::from_slice(bytes).map_err(|e| Error::StreamFormat(e.to_string()))?;
    meta.config.validate()?;
    if meta.drift_times != meta.config.drift_times() {
        return Err(Error::StreamFormat(
            "drift_times disagree with the concept lengths".into(),
        ));
    }
    Ok(meta)
}

/// Write `stream.csv` and `stream.json` into `dir`.
pub fn write_stream_dir(
    dir: &Path,
    scenario: Option<&str>,
    config: &StreamConfig,
    stream: &GeneratedStream,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(STREAM_CSV);
    std::fs::write(&csv_path, stream_csv_bytes(&stream.pairs)).map_err(|e| Error::io(&csv_path, e))?;
    let meta = StreamMeta {
        format_version: 1,
        scenario: scenario.map(str::to_string),
        config: config.clone(),
        drift_times: stream.drift_times.clone(),
    };
    let meta_path = dir.join(STREAM_META);
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&meta_path, e))?;
    text.push('\n');
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

pub fn read_stream_dir(dir: &Path) -> Result<(StreamMeta, Vec<(Label, Label)>)> {
    let csv_path = dir.join(STREAM_CSV);
    let meta_path = dir.join(STREAM_META);
    let csv_bytes = std::fs::read(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let meta_bytes = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_stream_meta(&meta_bytes)?;
    let pairs = parse_stream_csv(&csv_bytes)?;
    if pairs.len() as u64 != meta.config.len() {
        return Err(Error::StreamFormat(format!(
            "{} rows but the metadata describes {}",
            pairs.len(),
            meta.config.len()
        )));
    }
    Ok((meta, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateKind;
    use proptest::prelude::*;

    fn cp(p: [[f64; 2]; 2]) -> ConfusionProbMatrix {
        ConfusionProbMatrix::new(p).unwrap()
    }

    /// Exact rate as a reduced fraction `(num, den)`.
    fn rate(r: &RationalCp, k: RateKind) -> (i64, i64) {
        let [[tn, fn_], [fp, tp]] = r.num;
        let (a, b) = match k {
            RateKind::Tpr => (tp, tp + fn_),
            RateKind::Tnr => (tn, tn + fp),
            RateKind::Ppv => (tp, fp + tp),
            RateKind::Npv => (tn, tn + fn_),
        };
        (a, b)
    }

    fn same(a: (i64, i64), b: (i64, i64)) -> bool {
        a.0 * b.1 == b.0 * a.1
    }

    fn accuracy(r: &RationalCp) -> (i64, i64) {
        (r.num[0][0] + r.num[1][1], r.den)
    }

    fn positives(r: &RationalCp) -> (i64, i64) {
        (r.num[0][1] + r.num[1][1], r.den)
    }

    #[test]
    fn zero_cells_are_never_drawn() {
        let c = cp([[0.5, 0.0], [0.0, 0.5]]);
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let (y, yhat) = sample_pair(&c, &mut rng);
            assert_eq!(y, yhat);
        }
        // a matrix leaving a rate undefined is refused
        assert!(ConfusionProbMatrix::new([[0.0, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn drift_time_convention() {
        let c = cp([[0.4, 0.1], [0.1, 0.4]]);
        let one = StreamConfig {
            concepts: vec![ConceptSpec { cp: c, length: 100 }],
            seed: 1,
        };
        assert!(generate_stream(&one).unwrap().drift_times.is_empty());
        let two = scenario("Balance1").unwrap().config(10_000, 3).unwrap();
        let s = generate_stream(&two).unwrap();
        assert_eq!(s.drift_times, vec![5001]);
        assert_eq!(s.pairs.len(), 10_000);
        assert!(StreamConfig {
            concepts: vec![],
            seed: 0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn determinism() {
        let cfg = scenario("Imbalance2").unwrap().config(4000, 77).unwrap();
        assert_eq!(generate_stream(&cfg).unwrap(), generate_stream(&cfg).unwrap());
        assert_ne!(
            generate_stream(&cfg).unwrap(),
            generate_stream(&cfg.with_seed(78)).unwrap()
        );
    }

    #[test]
    fn cell_frequencies_chi_square() {
        let c = cp([[0.4, 0.1], [0.1, 0.4]]);
        let mut rng = rng_from_seed(2024);
        let n = 1_000_000u64;
        let mut counts = [[0u64; 2]; 2];
        for _ in 0..n {
            let (y, yhat) = sample_pair(&c, &mut rng);
            counts[yhat.index()][y.index()] += 1;
        }
        let mut chi2 = 0.0;
        for (row, probs) in counts.iter().zip(c.probs()) {
            for (&count, p) in row.iter().zip(probs) {
                let e = p * n as f64;
                let o = count as f64;
                chi2 += (o - e).powi(2) / e;
                // 3 standard errors per cell
                assert!((o / n as f64 - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
            }
        }
        // chi-square(3) upper 1e-3 point
        assert!(chi2 < 16.266, "chi2 {chi2}");
    }

    #[test]
    fn imbalance1_class_ratio() {
        let after = scenario("Imbalance1").unwrap().after.to_cp();
        let mut rng = rng_from_seed(5);
        let n = 200_000;
        let pos = (0..n).filter(|_| sample_pair(&after, &mut rng).0.is_one()).count();
        let f = pos as f64 / n as f64;
        assert!((f - 0.1).abs() < 3.0 * (0.09 / n as f64).sqrt(), "{f}");
    }

    #[test]
    fn balance1_tpr_constant_accuracy_drops() {
        let cfg = scenario("Balance1").unwrap().config(200_000, 9).unwrap();
        let s = generate_stream(&cfg).unwrap();
        let half = s.pairs.len() / 2;
        let tpr = |pairs: &[(Label, Label)]| {
            let pos: Vec<_> = pairs.iter().filter(|(y, _)| y.is_one()).collect();
            let hit = pos.iter().filter(|(_, yh)| yh.is_one()).count();
            (hit as f64 / pos.len() as f64, pos.len() as f64)
        };
        let acc = |pairs: &[(Label, Label)]| pairs.iter().filter(|(y, yh)| y == yh).count() as f64 / pairs.len() as f64;
        let (t1, n1) = tpr(&s.pairs[..half]);
        let (t2, n2) = tpr(&s.pairs[half..]);
        let se = (0.8 * 0.2 / n1 + 0.8 * 0.2 / n2).sqrt();
        assert!((t1 - t2).abs() < 3.0 * se);
        assert!((acc(&s.pairs[..half]) - 0.8).abs() < 0.01);
        assert!((acc(&s.pairs[half..]) - 0.7).abs() < 0.01);
    }

    #[test]
    fn scenario_algebra_is_exact() {
        use RateKind::*;
        let sc = builtin_scenarios();
        for s in sc.values() {
            let sum: i64 = s.before.num.iter().flatten().sum();
            assert_eq!(sum, s.before.den, "{}", s.name);
            let sum: i64 = s.after.num.iter().flatten().sum();
            assert_eq!(sum, s.after.den, "{}", s.name);
        }
        let b1 = sc["Balance1"];
        assert!(same(rate(&b1.before, Tpr), rate(&b1.after, Tpr)));
        assert!(same(accuracy(&b1.before), (4, 5)) && same(accuracy(&b1.after), (7, 10)));

        let b2 = sc["Balance2"];
        assert!(same(accuracy(&b2.before), (4, 5)) && same(accuracy(&b2.after), (4, 5)));

        let b3 = sc["Balance3"];
        assert!(same(rate(&b3.before, Tpr), rate(&b3.after, Tpr)));
        assert!(same(accuracy(&b3.before), (3, 5)) && same(accuracy(&b3.after), (7, 10)));

        let i1 = sc["Imbalance1"];
        assert!(same(rate(&i1.before, Tpr), rate(&i1.after, Tpr)));
        assert!(same(rate(&i1.before, Ppv), rate(&i1.after, Ppv)));
        assert!(same(positives(&i1.before), (1, 2)) && same(positives(&i1.after), (1, 10)));

        let i2 = sc["Imbalance2"];
        assert!(same(positives(&i2.before), (1, 5)) && same(positives(&i2.after), (1, 5)));
        assert!(same(accuracy(&i2.before), (4, 5)) && same(accuracy(&i2.after), (4, 5)));
        assert!(same(rate(&i2.before, Tpr), (3, 4)) && same(rate(&i2.after, Tpr), (1, 4)));

        let i3 = sc["Imbalance3"];
        assert_eq!(i3.before, i3.after);
        let fixed = sc["Imbalance3-fixed"];
        assert!(!fixed.as_published);
        assert!(same(positives(&fixed.before), positives(&fixed.after)));
        let lt = |a: (i64, i64), b: (i64, i64)| a.0 * b.1 < b.0 * a.1;
        assert!(lt(rate(&fixed.after, Tpr), rate(&fixed.before, Tpr)));
        assert!(lt(rate(&fixed.after, Ppv), rate(&fixed.before, Ppv)));
        assert!(lt(accuracy(&fixed.after), accuracy(&fixed.before)));
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(scenario("Nope"), Err(Error::UnknownScenario(_))));
        assert!(scenario("balance1").is_ok());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = scenario("Balance2").unwrap().config(500, 4).unwrap();
        let s = generate_stream(&cfg).unwrap();
        write_stream_dir(dir.path(), Some("Balance2"), &cfg, &s).unwrap();
        let (meta, pairs) = read_stream_dir(dir.path()).unwrap();
        assert_eq!(pairs, s.pairs);
        assert_eq!(meta.config, cfg);
        assert_eq!(meta.drift_times, vec![251]);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_stream_csv(b"a,b,c\n1,0,1\n").is_err());
        assert!(parse_stream_csv(b"t,y,yhat\n2,0,1\n").is_err());
        assert!(parse_stream_csv(b"t,y,yhat\n1,2,1\n").is_err());
        assert!(parse_stream_csv(b"t,y,yhat\n1,0\n").is_err());
        assert_eq!(parse_stream_csv(b"t,y,yhat\n").unwrap(), vec![]);
        assert!(parse_stream_meta(b"{}").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..300)) {
            let pairs: Vec<_> = bits.iter().map(|&(a, b)| (Label::from(a), Label::from(b))).collect();
            prop_assert_eq!(parse_stream_csv(&stream_csv_bytes(&pairs)).unwrap(), pairs);
        }

        #[test]
        fn csv_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_stream_csv(&bytes);
            let _ = parse_stream_meta(&bytes);
        }
    }
}
