use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::{mean, welch_ttest};

use super::rows::{format_sig9, ResultRow};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Row dimensions that can be averaged away before testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Noise,
    Samples,
    Iteration,
    Class,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Noise, Dimension::Samples, Dimension::Iteration, Dimension::Class];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Noise => "noise",
            Dimension::Samples => "samples",
            Dimension::Iteration => "iteration",
            Dimension::Class => "class",
        }
    }

    /// Comma-separated list; an empty string averages nothing.
    pub fn parse_list(s: &str) -> Result<Vec<Dimension>> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            Error::invalid(format!("cannot average over {s:?}; expected one of noise, samples, iteration, class"))
        })
    }
}

/// Outcome of one report cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// This model beats every other one at the significance level.
    Best(String),
    NoSignificance,
    /// Too few seeds or degenerate samples.
    Untestable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Best(m) => f.write_str(m),
            Verdict::NoSignificance => f.write_str("no_significance"),
            Verdict::Untestable => f.write_str("untestable"),
        }
    }
}

/// Retained coordinates of a cell; averaged dimensions are `None`.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct CellKey {
    pub noise: Option<f64>,
    pub samples: Option<usize>,
    pub iteration: Option<usize>,
    pub class: Option<String>,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub key: CellKey,
    pub verdict: Verdict,
    /// Model with the highest seed-averaged value.
    pub leader: String,
    pub leader_mean: f64,
    /// Largest p-value of the leader against the other models.
    pub max_p: Option<f64>,
}

// Sort key with the noise level as raw bits; noise levels are nonnegative.
type Key = (Option<u64>, Option<usize>, Option<usize>, Option<String>, String);

/// Per-seed running (sum, count).
type SeedSums = BTreeMap<usize, (f64, usize)>;

fn key_of(row: &ResultRow, avg: &[Dimension]) -> Key {
    let keep = |d| !avg.contains(&d);
    (
        keep(Dimension::Noise).then(|| row.noise.to_bits()),
        keep(Dimension::Samples).then_some(row.samples),
        keep(Dimension::Iteration).then_some(row.iteration),
        keep(Dimension::Class).then(|| row.class.clone()),
        row.metric.clone(),
    )
}

/// Per-cell Welch tests between models on seed-level values.
///
/// Values are first averaged over `dims_to_average` within each (model, seed).
/// A model is declared best when its mean is highest and it beats every other
/// model with `p < 0.05`.
pub fn significance_report(rows: &[ResultRow], dims_to_average: &[Dimension]) -> Result<Vec<ReportCell>> {
    // key -> model -> seed -> (sum, count)
    let mut cells: BTreeMap<Key, BTreeMap<String, SeedSums>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_warning()) {
        let acc = cells
            .entry(key_of(r, dims_to_average))
            .or_default()
            .entry(r.model.clone())
            .or_default()
            .entry(r.seed)
            .or_insert((0.0, 0));
        acc.0 += r.value;
        acc.1 += 1;
    }

    let mut report = Vec::with_capacity(cells.len());
    for ((noise, samples, iteration, class, metric), models) in cells {
        let samples_of: Vec<(String, Vec<f64>)> =
            models.into_iter().map(|(m, seeds)| (m, seeds.values().map(|&(s, n)| s / n as f64).collect())).collect();
        let means: Vec<f64> = samples_of.iter().map(|(_, v)| mean(v)).collect();
        let lead = (0..means.len()).fold(0, |best, i| if means[i] > means[best] { i } else { best });
        let (verdict, max_p) = judge(&samples_of, lead);
        report.push(ReportCell {
            key: CellKey { noise: noise.map(f64::from_bits), samples, iteration, class, metric },
            verdict,
            leader: samples_of[lead].0.clone(),
            leader_mean: means[lead],
            max_p,
        });
    }
    Ok(report)
}

fn judge(samples: &[(String, Vec<f64>)], lead: usize) -> (Verdict, Option<f64>) {
    if samples.len() < 2 || samples.iter().any(|(_, v)| v.len() < 2) {
        return (Verdict::Untestable, None);
    }
    let leader = &samples[lead].1;
    let mut max_p: f64 = 0.0;
    let mut beats_all = true;
    for (i, (_, other)) in samples.iter().enumerate() {
        if i == lead {
            continue;
        }
        match welch_ttest(leader, other) {
            Ok(w) => {
                max_p = max_p.max(w.p);
                beats_all &= w.t > 0.0 && w.p < SIGNIFICANCE_LEVEL;
            }
            // Two constant samples: equal ones are simply not different.
            Err(Error::Degenerate(_)) if mean(leader) == mean(other) => {
                max_p = 1.0;
                beats_all = false;
            }
            Err(_) => return (Verdict::Untestable, None),
        }
    }
    let verdict = if beats_all { Verdict::Best(samples[lead].0.clone()) } else { Verdict::NoSignificance };
    (verdict, Some(max_p))
}

pub const REPORT_HEADER: &str = "noise,samples,iteration,class,metric,verdict,leader,leader_mean,max_p";

/// CSV with `*` in averaged columns.
pub fn write_report(cells: &[ReportCell], mut out: impl Write) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    let star = |s: Option<String>| s.unwrap_or_else(|| "*".into());
    for c in cells {
        let k = &c.key;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            star(k.noise.map(format_sig9)),
            star(k.samples.map(|v| v.to_string())),
            star(k.iteration.map(|v| v.to_string())),
            star(k.class.clone()),
            k.metric,
            c.verdict,
            c.leader,
            format_sig9(c.leader_mean),
            c.max_p.map_or_else(|| "NA".into(), format_sig9)
        )?;
    }
    Ok(())
}
