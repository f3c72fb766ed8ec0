//! Score reports and their on-disk forms.
//!
//! JSON reports have a fixed key order and print every real with 12
//! significant digits, so identical inputs give byte-identical files.
//! Wall-clock timing is kept out of the report body and written separately.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::metrics::{score_task, ScoreOptions, TaskScore};
use crate::population::Population;

/// Formats a real with at most 12 significant digits, like C's `%.12g`.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        // Not representable in JSON; callers never produce these.
        return "null".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        let keep = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(keep);
    }
    s
}

struct Sig12(f64);

impl Serialize for Sig12 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawValue::from_string(format_sig12(self.0))
            .map_err(S::Error::custom)?
            .serialize(s)
    }
}

pub(crate) fn sig12<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    Sig12(*x).serialize(s)
}

pub(crate) fn sig12_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| Sig12(x)))
}

pub(crate) fn sig12_map<S: Serializer>(
    m: &indexmap::IndexMap<String, f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, &v)| (k, Sig12(v))))
}

/// Cross-task means of Ψ and J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(serialize_with = "sig12")]
    pub metric1: f64,
    #[serde(serialize_with = "sig12")]
    pub metric2: f64,
}

/// Wall-clock seconds per scoring phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phases: Vec<(String, f64)>,
}

/// Scores of one measure over a set of tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub measure: String,
    pub k_max: usize,
    pub weighting: crate::metrics::Weighting,
    pub per_task: BTreeMap<String, TaskScore>,
    pub aggregate: Aggregate,
    #[serde(skip)]
    pub timing: Timing,
}

/// Combines per-task scores into a report; tasks are keyed and averaged in
/// task-id order, whatever order they arrive in.
pub fn aggregate(
    tasks: impl IntoIterator<Item = (String, TaskScore)>,
    measure: &str,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    let mut per_task = BTreeMap::new();
    for (id, score) in tasks {
        if per_task.contains_key(&id) {
            return Err(Error::DuplicateTask(id));
        }
        per_task.insert(id, score);
    }
    if per_task.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let n = per_task.len() as f64;
    let metric1 = per_task.values().map(|t| t.psi).sum::<f64>() / n;
    let metric2 = per_task.values().map(|t| t.metric2).sum::<f64>() / n;
    Ok(ScoreReport {
        measure: measure.to_owned(),
        k_max: opts.k_max,
        weighting: opts.weighting,
        per_task,
        aggregate: Aggregate { metric1, metric2 },
        timing: Timing::default(),
    })
}

/// Scores one measure on every population, tasks in parallel.
pub fn score_populations(
    pops: &[Population],
    measure: &str,
    opts: &ScoreOptions,
) -> Result<ScoreReport> {
    let start = Instant::now();
    let scored = pops
        .par_iter()
        .map(|p| score_task(p, measure, opts).map(|s| (p.task_id().to_owned(), s)))
        .collect::<Result<Vec<_>>>()?;
    let scoring = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let mut report = aggregate(scored, measure, opts)?;
    report.timing.phases = vec![
        ("score_tasks".into(), scoring),
        ("aggregate".into(), start.elapsed().as_secs_f64()),
    ];
    Ok(report)
}

#[derive(Serialize)]
struct ReportsOut<'a> {
    reports: &'a [ScoreReport],
}

#[derive(Deserialize)]
struct ReportsIn {
    reports: Vec<ScoreReport>,
}

/// Serializes reports (caller decides their order) as pretty JSON.
pub fn reports_to_json(reports: &[ScoreReport]) -> String {
    let mut out = serde_json::to_string_pretty(&ReportsOut { reports })
        .expect("report serialization cannot fail");
    out.push('\n');
    out
}

pub fn reports_from_json(bytes: &[u8]) -> Result<Vec<ScoreReport>> {
    Ok(serde_json::from_slice::<ReportsIn>(bytes)?.reports)
}

/// One row per (measure, task): task_id, measure, psi, metric2, argmin_cond_set.
///
/// Strings are always quoted; the conditioning set is `;`-separated.
pub fn reports_to_csv(reports: &[ScoreReport]) -> String {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(Vec::new());
    w.write_record(["task_id", "measure", "psi", "metric2", "argmin_cond_set"])
        .expect("in-memory write");
    for r in reports {
        for (task, s) in &r.per_task {
            w.write_record([
                task.as_str(),
                r.measure.as_str(),
                &format_sig12(s.psi),
                &format_sig12(s.metric2),
                &s.argmin_cond_set.join(";"),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
