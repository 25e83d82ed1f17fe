use std::io::Write;

use super::{Detector, Status};
use crate::error::Result;
use crate::rates::Label;

pub const TRACE_HEADER: &str = "t,y,yhat,R_tpr,R_tnr,R_ppv,R_npv,Phat_tpr,Phat_tnr,Phat_ppv,Phat_npv,status";

/// One line of a trajectory dump. For NFR the `R_*` columns carry the
/// running mean the empirical rate is tested against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub y: Label,
    pub yhat: Label,
    pub statistic: [f64; 4],
    pub p_hat: [f64; 4],
    pub status: Status,
}

/// Run `detector` over `pairs`, writing one CSV row per step.
pub fn write_trace<D, I, W>(detector: &mut D, pairs: I, mut out: W) -> Result<Vec<TraceRow>>
where
    D: Detector + ?Sized,
    I: IntoIterator<Item = (Label, Label)>,
    W: Write,
{
    let io = |e| crate::Error::io("<trace>", e);
    writeln!(out, "{TRACE_HEADER}").map_err(io)?;
    let mut rows = Vec::new();
    for (y, yhat) in pairs {
        let o = detector.step(y, yhat);
        let snap = detector.snapshot().unwrap_or_default();
        let row = TraceRow {
            t: o.t,
            y,
            yhat,
            statistic: snap.statistic,
            p_hat: snap.p_hat,
            status: o.status,
        };
        let s = row.statistic;
        let p = row.p_hat;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.t, y, yhat, s[0], s[1], s[2], s[3], p[0], p[1], p[2], p[3], row.status
        )
        .map_err(io)?;
        rows.push(row);
    }
    Ok(rows)
}
