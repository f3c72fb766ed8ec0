//! Controlled ranking correlation (Ψ) and minimum normalized conditional
//! mutual information (J), per task and aggregated across tasks.
//!
//! Both metrics only look at sign votes, so any strictly increasing
//! transform of a measure leaves every number here unchanged.
//!
//! Conditioning sets are evaluated in parallel on the ambient rayon pool and
//! collected in canonical order; results do not depend on the worker count.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Group, Population};
use crate::votes::VoteJoint;

/// Default cap on the size of conditioning sets.
pub const DEFAULT_K_MAX: usize = 2;

/// How groups are weighted when combining per-group information.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every group with at least two models gets the same weight.
    #[default]
    Equal,
    /// Groups are weighted by their number of ordered pairs.
    Pairs,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "equal" => Ok(Weighting::Equal),
            "pairs" => Ok(Weighting::Pairs),
            other => Err(format!(
                "unknown weighting {other:?} (expected equal or pairs)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub k_max: usize,
    pub weighting: Weighting,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            k_max: DEFAULT_K_MAX,
            weighting: Weighting::Equal,
        }
    }
}

/// ψ for one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPsi {
    pub psi: f64,
    pub slices_used: usize,
    /// Slices with fewer than two models.
    pub slices_skipped: usize,
}

/// Per-axis ψ values and their mean Ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric1 {
    pub per_axis: IndexMap<String, f64>,
    pub psi: f64,
    pub warnings: Vec<String>,
}

/// Conditional mutual information for one conditioning set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmiBreakdown {
    pub cond_set: Vec<String>,
    /// I(V_g, V_mu | O) in bits.
    #[serde(serialize_with = "crate::report::sig12")]
    pub mi: f64,
    /// H(V_g | O) in bits.
    #[serde(serialize_with = "crate::report::sig12")]
    pub entropy: f64,
    /// mi / entropy, or 0 when the entropy vanishes.
    #[serde(serialize_with = "crate::report::sig12")]
    pub normalized: f64,
    /// One weight per group in canonical order; 0 for skipped groups.
    #[serde(serialize_with = "crate::report::sig12_vec")]
    pub group_weights: Vec<f64>,
    pub skipped_groups: usize,
}

/// Minimum of the normalized conditional MI over conditioning sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric2 {
    pub j: f64,
    pub argmin: Vec<String>,
    pub breakdowns: Vec<CmiBreakdown>,
    /// Conditioning sets that left no group with two models.
    pub unevaluable: Vec<Vec<String>>,
}

/// Vote table of gap against measure over ordered pairs within one group.
pub fn vote_joint(pop: &Population, group: &Group, measure: &str) -> Result<VoteJoint> {
    let mu = pop.measure(measure)?;
    joint_for(pop.gaps(), mu, &group.members)
}

fn joint_for(gaps: &[f64], mu: &[f64], members: &[usize]) -> Result<VoteJoint> {
    let g: Vec<f64> = members.iter().map(|&i| gaps[i]).collect();
    let m: Vec<f64> = members.iter().map(|&i| mu[i]).collect();
    VoteJoint::count(&g, &m)
}

/// ψ for one axis: mean Kendall τ over the slices in which only that axis
/// varies. Replicas sharing a cell fall in the same slice.
pub fn psi_axis(pop: &Population, measure: &str, axis: &str) -> Result<AxisPsi> {
    let mu = pop.measure(measure)?;
    let target = pop.space().axis_index(axis)?;
    if pop.space().axes()[target].cardinality() < 2 {
        return Err(Error::SingleValuedAxis(axis.to_owned()));
    }
    let others: Vec<usize> = (0..pop.space().len()).filter(|&a| a != target).collect();
    let slices = pop.partition(&others);
    let mut sum = 0.0;
    let mut used = 0;
    for slice in &slices {
        if slice.len() < 2 {
            continue;
        }
        sum += joint_for(pop.gaps(), mu, &slice.members)?.tau();
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoPairs(format!("every slice along axis {axis:?}")));
    }
    Ok(AxisPsi {
        psi: sum / used as f64,
        slices_used: used,
        slices_skipped: slices.len() - used,
    })
}

/// Ψ: mean ψ over the multi-valued axes.
///
/// Axes whose slices all hold fewer than two models are left out with a
/// warning.
pub fn psi_overall(pop: &Population, measure: &str) -> Result<Metric1> {
    pop.measure(measure)?;
    let mut per_axis = IndexMap::new();
    let mut warnings = Vec::new();
    for axis in pop.space().axes() {
        if axis.cardinality() < 2 {
            warnings.push(format!(
                "axis {:?} is single-valued; excluded from metric 1",
                axis.name
            ));
            continue;
        }
        match psi_axis(pop, measure, &axis.name) {
            Ok(p) => {
                if p.slices_skipped > 0 {
                    warnings.push(format!(
                        "axis {:?}: {} of {} slices have fewer than two models",
                        axis.name,
                        p.slices_skipped,
                        p.slices_used + p.slices_skipped
                    ));
                }
                per_axis.insert(axis.name.clone(), p.psi);
            }
            Err(Error::NoPairs(_)) => {
                warnings.push(format!(
                    "axis {:?}: no slice with two models; excluded",
                    axis.name
                ));
            }
            Err(e) => return Err(e),
        }
    }
    if per_axis.is_empty() {
        return Err(Error::NoEligibleAxis);
    }
    let psi = per_axis.values().sum::<f64>() / per_axis.len() as f64;
    Ok(Metric1 {
        per_axis,
        psi,
        warnings,
    })
}

/// Conditional mutual information between gap votes and measure votes
/// given the values of the axes in `cond`, normalized by the conditional
/// entropy of the gap votes.
pub fn cond_mi<S: AsRef<str>>(
    pop: &Population,
    measure: &str,
    cond: &[S],
    weighting: Weighting,
) -> Result<CmiBreakdown> {
    let mut axes = cond
        .iter()
        .map(|n| pop.space().axis_index(n.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    axes.sort_unstable();
    axes.dedup();
    cond_mi_axes(pop, pop.measure(measure)?, &axes, weighting)
}

fn cond_mi_axes(
    pop: &Population,
    mu: &[f64],
    axes: &[usize],
    weighting: Weighting,
) -> Result<CmiBreakdown> {
    let cond_set: Vec<String> = axes
        .iter()
        .map(|&a| pop.space().axis_name(a).to_owned())
        .collect();
    let groups = pop.partition(axes);
    let mut parts = Vec::with_capacity(groups.len());
    for group in &groups {
        parts.push(if group.len() < 2 {
            None
        } else {
            Some(joint_for(pop.gaps(), mu, &group.members)?)
        });
    }
    let scored: Vec<&VoteJoint> = parts.iter().flatten().collect();
    if scored.is_empty() {
        return Err(Error::NoPairs(format!(
            "conditioning set {{{}}}",
            cond_set.join(",")
        )));
    }
    let n_scored = scored.len() as f64;
    let all_pairs: u64 = scored.iter().map(|j| j.total()).sum();
    let group_weights: Vec<f64> = parts
        .iter()
        .map(|p| match (p, weighting) {
            (None, _) => 0.0,
            (Some(_), Weighting::Equal) => 1.0 / n_scored,
            (Some(j), Weighting::Pairs) => j.total() as f64 / all_pairs as f64,
        })
        .collect();

    let mut mi = 0.0;
    let mut entropy = 0.0;
    for (p, &w) in parts.iter().zip(&group_weights) {
        if let Some(joint) = p {
            mi += w * joint.mutual_information();
            entropy += w * joint.entropy_g();
        }
    }
    let normalized = if entropy > 0.0 {
        (mi / entropy).min(1.0)
    } else {
        0.0
    };
    Ok(CmiBreakdown {
        cond_set,
        mi,
        entropy,
        normalized,
        group_weights,
        skipped_groups: groups.len() - scored.len(),
    })
}

/// All subsets of `axes` with at most `k_max` members, by size and then
/// lexicographically.
pub fn conditioning_sets(axes: &[usize], k_max: usize) -> Vec<Vec<usize>> {
    fn extend(
        axes: &[usize],
        size: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..axes.len() {
            cur.push(axes[i]);
            extend(axes, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=k_max.min(axes.len()) {
        extend(axes, size, 0, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

/// J: the minimum normalized conditional MI over every conditioning set of
/// at most `k_max` multi-valued axes, the empty set included.
///
/// Ties for the minimum go to the first set in enumeration order (smaller
/// sets first, then lexicographic in axis order). Sets under which no group
/// holds two models are listed in `unevaluable` and left out of the minimum.
pub fn metric2_task(
    pop: &Population,
    measure: &str,
    k_max: usize,
    weighting: Weighting,
) -> Result<Metric2> {
    let mu = pop.measure(measure)?;
    let sets = conditioning_sets(&pop.space().multi_valued_axes(), k_max);
    let results: Vec<Result<CmiBreakdown>> = sets
        .par_iter()
        .map(|axes| cond_mi_axes(pop, mu, axes, weighting))
        .collect();

    let mut breakdowns = Vec::with_capacity(results.len());
    let mut unevaluable = Vec::new();
    for (axes, res) in sets.iter().zip(results) {
        match res {
            Ok(b) => breakdowns.push(b),
            Err(Error::NoPairs(_)) => unevaluable.push(
                axes.iter()
                    .map(|&a| pop.space().axis_name(a).to_owned())
                    .collect(),
            ),
            Err(e) => return Err(e),
        }
    }
    let best = breakdowns
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, b)| match best {
            Some((_, v)) if v <= b.normalized => best,
            _ => Some((i, b.normalized)),
        })
        .ok_or_else(|| Error::NoPairs("every conditioning set".into()))?;
    Ok(Metric2 {
        j: best.1,
        argmin: breakdowns[best.0].cond_set.clone(),
        breakdowns,
        unevaluable,
    })
}

/// Metric 1 and Metric 2 for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    #[serde(serialize_with = "crate::report::sig12_map")]
    pub psi_per_axis: IndexMap<String, f64>,
    #[serde(serialize_with = "crate::report::sig12")]
    pub psi: f64,
    #[serde(serialize_with = "crate::report::sig12")]
    pub metric2: f64,
    pub argmin_cond_set: Vec<String>,
    pub breakdowns: Vec<CmiBreakdown>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Scores one measure on one task.
pub fn score_task(pop: &Population, measure: &str, opts: &ScoreOptions) -> Result<TaskScore> {
    let m1 = psi_overall(pop, measure)?;
    let m2 = metric2_task(pop, measure, opts.k_max, opts.weighting)?;
    let mut warnings = m1.warnings;
    warnings.extend(m2.unevaluable.iter().map(|set| {
        format!(
            "conditioning set {{{}}} leaves no group with two models; excluded from metric 2",
            set.join(",")
        )
    }));
    Ok(TaskScore {
        psi_per_axis: m1.per_axis,
        psi: m1.psi,
        metric2: m2.j,
        argmin_cond_set: m2.argmin,
        breakdowns: m2.breakdowns,
        warnings,
    })
}
