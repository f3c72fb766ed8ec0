//! Test-only brute-force reference implementation and random population
//! builders shared by the integration suites.
//!
//! The oracle works on plain vectors: it enumerates ordered pairs directly,
//! counts votes in a hash map, and evaluates the textbook MI and entropy
//! sums. It shares no code with the library's scoring path.

#![allow(dead_code)]

use std::collections::HashMap;

use gapscore::{Axis, HyperparamSpace, ModelRecord, Population};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A population flattened into plain data.
#[derive(Debug, Clone)]
pub struct Flat {
    pub cards: Vec<usize>,
    pub coords: Vec<Vec<usize>>,
    pub gaps: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Flat {
    pub fn from_population(pop: &Population, measure: &str) -> Self {
        Flat {
            cards: pop.space().cardinalities(),
            coords: pop.records().iter().map(|r| r.coord.clone()).collect(),
            gaps: pop
                .records()
                .iter()
                .map(|r| r.val_err - r.train_err)
                .collect(),
            mu: pop.measure(measure).unwrap().to_vec(),
        }
    }
}

fn sgn(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn tau(mu: &[f64], g: &[f64]) -> f64 {
    let n = mu.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += (sgn(mu[i] - mu[j]) * sgn(g[i] - g[j])) as f64;
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Every value combination of the given axes, first axis slowest.
fn combos(cards: &[usize], axes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &a in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..cards[a]).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn members(flat: &Flat, axes: &[usize], values: &[usize]) -> Vec<usize> {
    (0..flat.coords.len())
        .filter(|&m| {
            axes.iter()
                .zip(values)
                .all(|(&a, &v)| flat.coords[m][a] == v)
        })
        .collect()
}

pub fn psi_axis(flat: &Flat, axis: usize) -> Option<f64> {
    let others: Vec<usize> = (0..flat.cards.len()).filter(|&a| a != axis).collect();
    let mut taus = Vec::new();
    for values in combos(&flat.cards, &others) {
        let m = members(flat, &others, &values);
        if m.len() >= 2 {
            let mu: Vec<f64> = m.iter().map(|&i| flat.mu[i]).collect();
            let g: Vec<f64> = m.iter().map(|&i| flat.gaps[i]).collect();
            taus.push(tau(&mu, &g));
        }
    }
    (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64)
}

/// (per-axis ψ for scorable multi-valued axes, Ψ).
pub fn psi_overall(flat: &Flat) -> Option<(Vec<(usize, f64)>, f64)> {
    let per: Vec<(usize, f64)> = (0..flat.cards.len())
        .filter(|&a| flat.cards[a] >= 2)
        .filter_map(|a| psi_axis(flat, a).map(|p| (a, p)))
        .collect();
    if per.is_empty() {
        return None;
    }
    let psi = per.iter().map(|p| p.1).sum::<f64>() / per.len() as f64;
    Some((per, psi))
}

#[derive(Debug, Clone, Copy)]
pub struct Cmi {
    pub mi: f64,
    pub entropy: f64,
    pub normalized: f64,
}

pub fn cmi(flat: &Flat, axes: &[usize], pair_weighted: bool) -> Option<Cmi> {
    let mut per_group = Vec::new();
    for values in combos(&flat.cards, axes) {
        let m = members(flat, axes, &values);
        if m.len() < 2 {
            continue;
        }
        let mut joint: HashMap<(i32, i32), f64> = HashMap::new();
        let mut pairs = 0.0;
        for &i in &m {
            for &j in &m {
                if i != j {
                    let key = (
                        sgn(flat.gaps[i] - flat.gaps[j]),
                        sgn(flat.mu[i] - flat.mu[j]),
                    );
                    *joint.entry(key).or_default() += 1.0;
                    pairs += 1.0;
                }
            }
        }
        let mut pg: HashMap<i32, f64> = HashMap::new();
        let mut pm: HashMap<i32, f64> = HashMap::new();
        for (&(a, b), &c) in &joint {
            *pg.entry(a).or_default() += c / pairs;
            *pm.entry(b).or_default() += c / pairs;
        }
        let mut mi = 0.0;
        for (&(a, b), &c) in &joint {
            let p = c / pairs;
            mi += p * (p / (pg[&a] * pm[&b])).log2();
        }
        let h: f64 = pg.values().map(|&p| -p * p.log2()).sum();
        per_group.push((pairs, mi, h));
    }
    if per_group.is_empty() {
        return None;
    }
    let total_pairs: f64 = per_group.iter().map(|g| g.0).sum();
    let k = per_group.len() as f64;
    let (mut mi, mut entropy) = (0.0, 0.0);
    for (pairs, gmi, gh) in per_group {
        let w = if pair_weighted {
            pairs / total_pairs
        } else {
            1.0 / k
        };
        mi += w * gmi;
        entropy += w * gh;
    }
    let normalized = if entropy > 0.0 { mi / entropy } else { 0.0 };
    Some(Cmi {
        mi,
        entropy,
        normalized,
    })
}

/// Subsets of the multi-valued axes of size ≤ k_max, via bitmasks.
pub fn cond_sets(cards: &[usize], k_max: usize) -> Vec<Vec<usize>> {
    let multi: Vec<usize> = (0..cards.len()).filter(|&a| cards[a] >= 2).collect();
    (0u32..1 << multi.len())
        .filter(|mask| mask.count_ones() as usize <= k_max)
        .map(|mask| {
            (0..multi.len())
                .filter(|&b| mask & (1 << b) != 0)
                .map(|b| multi[b])
                .collect()
        })
        .collect()
}

pub fn j(flat: &Flat, k_max: usize, pair_weighted: bool) -> Option<f64> {
    cond_sets(&flat.cards, k_max)
        .iter()
        .filter_map(|o| cmi(flat, o, pair_weighted))
        .map(|c| c.normalized)
        .reduce(f64::min)
}

/// Random population with at most `max_models` models on at most
/// `max_axes` axes of up to three values each. With `ties`, gaps and
/// measure values come from small discrete sets.
pub fn random_population(
    rng: &mut ChaCha8Rng,
    max_axes: usize,
    max_models: usize,
    ties: bool,
) -> Population {
    let n_axes = rng.random_range(1..=max_axes);
    let axes: Vec<Axis> = (0..n_axes)
        .map(|a| {
            let card = rng.random_range(1..=3);
            Axis::new(format!("h{a}"), (0..card).map(|v| v as i64))
        })
        .collect();
    let space = HyperparamSpace::new(axes).unwrap();
    let cards = space.cardinalities();
    let n = rng.random_range(2..=max_models);
    let mut replicas: HashMap<Vec<usize>, u32> = HashMap::new();
    let mut records = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for _ in 0..n {
        let coord: Vec<usize> = cards.iter().map(|&c| rng.random_range(0..c)).collect();
        let r = replicas.entry(coord.clone()).or_insert(0);
        // Zero training error keeps tied gaps exactly tied.
        let train: f64 = if ties {
            0.0
        } else {
            rng.random_range(0.0..0.01)
        };
        let g: f64 = if ties {
            rng.random_range(0..4) as f64 * 0.1
        } else {
            rng.random_range(0.0..0.5)
        };
        records.push(ModelRecord::new(coord, train, train + g).with_replica(*r));
        *r += 1;
        mu.push(if ties {
            rng.random_range(-2..=2) as f64 * 0.25
        } else {
            rng.random_range(-1.0..1.0)
        });
    }
    Population::new(
        "rand",
        space,
        records,
        IndexMap::from([("mu".to_string(), mu)]),
    )
    .unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every real number in a task score, in a fixed order.
pub fn numbers(score: &gapscore::TaskScore) -> Vec<f64> {
    let mut out: Vec<f64> = score.psi_per_axis.values().copied().collect();
    out.push(score.psi);
    out.push(score.metric2);
    for b in &score.breakdowns {
        out.extend([b.mi, b.entropy, b.normalized]);
        out.extend(&b.group_weights);
    }
    out
}

/// Reorders records (and measure values with them).
pub fn shuffled(pop: &Population, rng: &mut ChaCha8Rng) -> Population {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.shuffle(rng);
    let records = order.iter().map(|&i| pop.records()[i].clone()).collect();
    let measures = pop
        .measures()
        .iter()
        .map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i]).collect()))
        .collect();
    Population::new(pop.task_id(), pop.space().clone(), records, measures).unwrap()
}
