//! Confusion-count bookkeeping and the four characteristic rates.
//!
//! Index convention, used everywhere in this crate: matrices are indexed
//! `[predicted][true]`, so
//!
//! ```text
//!              true=0  true=1
//! pred=0   [[  TN  ,   FN  ],
//! pred=1    [  FP  ,   TP  ]]
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }

    pub fn is_one(self) -> bool {
        self == Label::One
    }
}

impl From<bool> for Label {
    fn from(b: bool) -> Self {
        if b {
            Label::One
        } else {
            Label::Zero
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.index() as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Zero),
            1 => Ok(Label::One),
            other => Err(Error::InvalidParam(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// One of the four monitored rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Tpr,
    Tnr,
    Ppv,
    Npv,
}

impl RateKind {
    /// Fixed iteration order: tpr, tnr, ppv, npv.
    pub const ALL: [RateKind; 4] = [RateKind::Tpr, RateKind::Tnr, RateKind::Ppv, RateKind::Npv];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RateKind::Tpr => "tpr",
            RateKind::Tnr => "tnr",
            RateKind::Ppv => "ppv",
            RateKind::Npv => "npv",
        }
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A small set of [`RateKind`]s, stored as a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RateSet(u8);

impl RateSet {
    pub const EMPTY: RateSet = RateSet(0);

    pub fn insert(&mut self, kind: RateKind) {
        self.0 |= 1 << kind.index();
    }

    pub fn contains(self, kind: RateKind) -> bool {
        self.0 & (1 << kind.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = RateKind> {
        RateKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl FromIterator<RateKind> for RateSet {
    fn from_iter<I: IntoIterator<Item = RateKind>>(iter: I) -> Self {
        let mut s = RateSet::EMPTY;
        for k in iter {
            s.insert(k);
        }
        s
    }
}

impl fmt::Display for RateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(RateKind::name).collect();
        f.write_str(&names.join("|"))
    }
}

/// The two rates whose empirical value moves when `(y, yhat)` is observed.
///
/// tpr/tnr denominators are partitioned by the true label, ppv/npv
/// denominators by the predicted label.
pub fn influenced_rates(y: Label, yhat: Label) -> [RateKind; 2] {
    let by_truth = if y.is_one() { RateKind::Tpr } else { RateKind::Tnr };
    let by_pred = if yhat.is_one() { RateKind::Ppv } else { RateKind::Npv };
    [by_truth, by_pred]
}

/// Running 2x2 counts, `c[predicted][true]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    c: [[u64; 2]; 2],
}

impl Default for ConfusionCounts {
    fn default() -> Self {
        Self::new()
    }
}

impl ConfusionCounts {
    /// The all-ones starting matrix.
    pub fn new() -> Self {
        Self { c: [[1, 1], [1, 1]] }
    }

    /// Build from explicit counts. Every entry must be at least 1.
    pub fn from_counts(c: [[u64; 2]; 2]) -> Result<Self> {
        if c.iter().flatten().any(|&v| v == 0) {
            return Err(Error::InvalidParam("confusion counts must all be >= 1".into()));
        }
        Ok(Self { c })
    }

    pub fn get(&self, pred: Label, truth: Label) -> u64 {
        self.c[pred.index()][truth.index()]
    }

    pub fn counts(&self) -> [[u64; 2]; 2] {
        self.c
    }

    pub fn record(&mut self, y: Label, yhat: Label) {
        self.c[yhat.index()][y.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.c.iter().flatten().sum()
    }

    pub fn tn(&self) -> u64 {
        self.c[0][0]
    }
    pub fn fn_(&self) -> u64 {
        self.c[0][1]
    }
    pub fn fp(&self) -> u64 {
        self.c[1][0]
    }
    pub fn tp(&self) -> u64 {
        self.c[1][1]
    }

    pub fn denominator(&self, kind: RateKind) -> u64 {
        rate_denominator(self, kind)
    }

    pub fn rate(&self, kind: RateKind) -> f64 {
        empirical_rate(self, kind)
    }
}

/// N for a rate: tpr = FN+TP, tnr = TN+FP, ppv = FP+TP, npv = TN+FN.
pub fn rate_denominator(c: &ConfusionCounts, kind: RateKind) -> u64 {
    match kind {
        RateKind::Tpr => c.fn_() + c.tp(),
        RateKind::Tnr => c.tn() + c.fp(),
        RateKind::Ppv => c.fp() + c.tp(),
        RateKind::Npv => c.tn() + c.fn_(),
    }
}

/// Count-ratio estimate of a rate.
pub fn empirical_rate(c: &ConfusionCounts, kind: RateKind) -> f64 {
    let num = match kind {
        RateKind::Tpr | RateKind::Ppv => c.tp(),
        RateKind::Tnr | RateKind::Npv => c.tn(),
    };
    num as f64 / rate_denominator(c, kind) as f64
}

const PROB_TOL: f64 = 1e-12;

/// Joint distribution of `(yhat, y)`, same indexing as [`ConfusionCounts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct ConfusionProbMatrix {
    p: [[f64; 2]; 2],
}

impl ConfusionProbMatrix {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self> {
        if p.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam(format!(
                "confusion probabilities must be finite and nonnegative: {p:?}"
            )));
        }
        let sum: f64 = p.iter().flatten().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParam(format!(
                "confusion probabilities sum to {sum}, expected 1"
            )));
        }
        let rows = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
        let cols = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
        if rows.iter().chain(cols.iter()).any(|s| *s <= 0.0) {
            return Err(Error::InvalidParam(format!(
                "every row and column needs positive mass: {p:?}"
            )));
        }
        Ok(Self { p })
    }

    pub fn get(&self, pred: Label, truth: Label) -> f64 {
        self.p[pred.index()][truth.index()]
    }

    pub fn probs(&self) -> [[f64; 2]; 2] {
        self.p
    }

    /// Population value of a rate.
    pub fn rate(&self, kind: RateKind) -> f64 {
        let [[tn, fn_], [fp, tp]] = self.p;
        match kind {
            RateKind::Tpr => tp / (tp + fn_),
            RateKind::Tnr => tn / (tn + fp),
            RateKind::Ppv => tp / (fp + tp),
            RateKind::Npv => tn / (tn + fn_),
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.p[0][0] + self.p[1][1]
    }

    /// P(y = 1).
    pub fn positive_rate(&self) -> f64 {
        self.p[0][1] + self.p[1][1]
    }
}

impl TryFrom<[[f64; 2]; 2]> for ConfusionProbMatrix {
    type Error = Error;
    fn try_from(p: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ConfusionProbMatrix> for [[f64; 2]; 2] {
    fn from(m: ConfusionProbMatrix) -> Self {
        m.p
    }
}
