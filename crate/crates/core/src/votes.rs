//! Pairwise sign votes and the statistics built from them.
//!
//! Every score in this crate is a function of the joint distribution of
//! `(sgn(g_i - g_j), sgn(mu_i - mu_j))` over ordered pairs of distinct
//! models. [`VoteJoint`] holds that distribution as a 3×3 count table and is
//! filled by a merge-sort count in O(n log n) rather than by visiting all
//! n(n-1) pairs.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

/// `sgn(a - b)`, with ties giving exactly 0.
pub fn sign_vote(a: f64, b: f64) -> Result<i8> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("sign vote operand".into()));
    }
    Ok(match a.partial_cmp(&b) {
        Some(Ordering::Greater) => 1,
        Some(Ordering::Less) => -1,
        _ => 0,
    })
}

/// Kendall's τ without tie correction: the mean of `V_mu · V_g` over all
/// ordered pairs of distinct models.
pub fn kendall_tau(mu: &[f64], g: &[f64]) -> Result<f64> {
    Ok(VoteJoint::count(g, mu)?.tau())
}

/// Counts of `(V_g, V_mu)` over ordered pairs of distinct models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VoteJoint {
    /// `counts[V_g + 1][V_mu + 1]`.
    counts: [[u64; 3]; 3],
    total: u64,
}

impl VoteJoint {
    /// Builds the table for paired observations of gap and measure.
    pub fn count(g: &[f64], mu: &[f64]) -> Result<Self> {
        if g.len() != mu.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                got: mu.len(),
            });
        }
        if g.len() < 2 {
            return Err(Error::TooFew {
                needed: 2,
                got: g.len(),
            });
        }
        if g.iter().chain(mu).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vote input".into()));
        }
        // -0.0 and 0.0 must tie.
        let mut pairs: Vec<(f64, f64)> = g
            .iter()
            .zip(mu)
            .map(|(&a, &b)| (a + 0.0, b + 0.0))
            .collect();
        Ok(Self::from_pairs(&mut pairs))
    }

    fn from_pairs(pairs: &mut [(f64, f64)]) -> Self {
        let n = pairs.len() as u64;
        pairs.sort_unstable_by(|x, y| cmp(x.0, y.0).then(cmp(x.1, y.1)));

        let tied_g = tied_pairs(pairs, |a, b| a.0 == b.0);
        let tied_both = tied_pairs(pairs, |a, b| a == b);

        // With g ascending (ties broken by mu ascending), every strict
        // inversion of the mu sequence is a discordant pair.
        let mut mu: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let discordant = count_inversions(&mut mu);
        let tied_mu = tied_pairs(&mu, |a, b| a == b);

        let unordered = n * (n - 1) / 2;
        let concordant = unordered + tied_both - tied_g - tied_mu - discordant;
        let g_only = tied_g - tied_both;
        let mu_only = tied_mu - tied_both;

        let counts = [
            [concordant, mu_only, discordant],
            [g_only, 2 * tied_both, g_only],
            [discordant, mu_only, concordant],
        ];
        VoteJoint {
            counts,
            total: n * (n - 1),
        }
    }

    /// Count of ordered pairs with the given votes.
    pub fn get(&self, v_g: i8, v_mu: i8) -> u64 {
        self.counts[(v_g + 1) as usize][(v_mu + 1) as usize]
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    /// Number of ordered pairs, s(s-1).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn tau(&self) -> f64 {
        let agree = self.counts[0][0] + self.counts[2][2];
        let disagree = self.counts[0][2] + self.counts[2][0];
        (agree as f64 - disagree as f64) / self.total as f64
    }

    /// Entropy of `V_g` in bits.
    pub fn entropy_g(&self) -> f64 {
        entropy_bits(self.counts.iter().map(|row| row.iter().sum()), self.total)
    }

    /// Entropy of `V_mu` in bits.
    pub fn entropy_mu(&self) -> f64 {
        entropy_bits(
            (0..3).map(|b| self.counts.iter().map(|row| row[b]).sum()),
            self.total,
        )
    }

    /// Joint entropy of `(V_g, V_mu)` in bits.
    pub fn entropy_joint(&self) -> f64 {
        entropy_bits(self.counts.iter().flatten().copied(), self.total)
    }

    /// Mutual information between `V_g` and `V_mu` in bits.
    ///
    /// Computed as `H(g) + H(mu) - H(g, mu)`. When one vote is a function of
    /// the other, the joint terms are the same floating-point terms as the
    /// marginal ones, so `I = H(g)` and `I = 0` come out exactly.
    pub fn mutual_information(&self) -> f64 {
        let mi = self.entropy_g() + self.entropy_mu() - self.entropy_joint();
        mi.max(0.0)
    }
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite values")
}

/// `-Σ p log2 p` over non-zero counts, in iteration order.
fn entropy_bits(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let total = total as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Σ t(t-1)/2 over runs of adjacent equal items in a sorted slice.
fn tied_pairs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts ascending and returns the number of pairs i < j with `v[i] > v[j]`.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut buf = v.to_vec();
    let mut inversions = 0u64;
    let mut width = 1;
    let (mut src, mut dst) = (v, buf.as_mut_slice());
    let mut in_buf = false;
    while width < n {
        for start in (0..n).step_by(2 * width) {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if src[j] < src[i] {
                    dst[k] = src[j];
                    inversions += (mid - i) as u64;
                    j += 1;
                } else {
                    dst[k] = src[i];
                    i += 1;
                }
                k += 1;
            }
            dst[k..k + mid - i].copy_from_slice(&src[i..mid]);
            k += mid - i;
            dst[k..k + end - j].copy_from_slice(&src[j..end]);
        }
        std::mem::swap(&mut src, &mut dst);
        in_buf = !in_buf;
        width *= 2;
    }
    if in_buf {
        dst.copy_from_slice(src);
    }
    inversions
}
