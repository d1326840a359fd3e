//! Monte Carlo error-rate benchmarks.
//!
//! Inserted keys have the top bit clear and probe keys have it set, so every
//! probe is a key that was never inserted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::Presence;
use crate::error::{Error, Result};
use crate::maplet::{Maplet, Mode};
use crate::report::{Cell, SimReport};

const PROBE_BIT: u64 = 1 << 63;

/// Two-sided normal quantile for 99% coverage.
const Z99: f64 = 2.575_829_303_549;

/// Wilson score interval for `hits` successes in `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn check_eps(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("epsilon {epsilon} outside (0, 1)")))
    }
}

fn filled(n: u64, epsilon: f64, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Maplet<Presence>> {
    let mut m = Maplet::with_capacity(n, epsilon, Presence, mode)?;
    for _ in 0..n {
        m.insert(&(rng.random::<u64>() & !PROBE_BIT), &())?;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FprReport {
    pub items: u64,
    pub epsilon: f64,
    pub probes: u64,
    pub false_positives: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bits_per_item: Option<f64>,
    /// Allowed rate as a multiple of `epsilon`.
    pub tolerance: f64,
}

impl FprReport {
    pub fn rate(&self) -> f64 {
        if self.probes == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.probes as f64
        }
    }

    pub fn bound(&self) -> f64 {
        self.tolerance * self.epsilon
    }

    /// The measured rate is within the bound at 99% confidence.
    pub fn passed(&self) -> bool {
        self.ci_high <= self.bound() || self.false_positives == 0
    }

    pub fn report(&self) -> SimReport {
        let mut r = SimReport::new([
            "items",
            "epsilon",
            "probes",
            "false_positives",
            "fpr",
            "ci99_low",
            "ci99_high",
            "bound",
            "bits_per_item",
            "pass",
        ]);
        r.push(vec![
            self.items.into(),
            self.epsilon.into(),
            self.probes.into(),
            self.false_positives.into(),
            self.rate().into(),
            self.ci_low.into(),
            self.ci_high.into(),
            self.bound().into(),
            self.bits_per_item.into(),
            self.passed().into(),
        ]);
        r
    }
}

/// Inserts `n` random keys into a filter sized for `n` at `epsilon`, then
/// counts positives among `probes` absent keys.
pub fn bench_fpr(n: u64, epsilon: f64, probes: u64, seed: u64) -> Result<FprReport> {
    check_eps(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = filled(n, epsilon, Mode::MergedSlot, &mut rng)?;
    let false_positives = (0..probes)
        .filter(|_| m.contains(&(rng.random::<u64>() | PROBE_BIT)))
        .count() as u64;
    let (ci_low, ci_high) = wilson_interval(false_positives, probes, Z99);
    Ok(FprReport {
        items: n,
        epsilon,
        probes,
        false_positives,
        ci_low,
        ci_high,
        bits_per_item: m.stats().bits_per_item,
        tolerance: 1.5,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongReport {
    pub items: u64,
    pub epsilon: f64,
    pub probes: u64,
    /// `histogram[l]` counts probes that matched exactly `l` stored instances.
    pub histogram: Vec<u64>,
}

impl StrongReport {
    /// Empirical `Pr[matches >= l]`.
    pub fn tail(&self, l: usize) -> f64 {
        if self.probes == 0 {
            return 0.0;
        }
        self.histogram.iter().skip(l).sum::<u64>() as f64 / self.probes as f64
    }

    /// Allowed tail: `1.5 eps` at one match, `2^(l-1) eps^l` beyond.
    pub fn tail_bound(&self, l: usize) -> f64 {
        match l {
            0 => 1.0,
            1 => 1.5 * self.epsilon,
            _ => 2f64.powi(l as i32 - 1) * self.epsilon.powi(l as i32),
        }
    }

    /// Checks the tail bound for one, two and three matches.
    pub fn passed(&self) -> bool {
        (1..=3).all(|l| self.tail(l) <= self.tail_bound(l))
    }

    pub fn report(&self) -> SimReport {
        let mut r = SimReport::new(["matches", "count", "fraction", "tail", "tail_bound", "pass"]);
        let rows = self.histogram.len().max(4);
        for l in 0..rows {
            let count = self.histogram.get(l).copied().unwrap_or(0);
            let checked = (1..=3).contains(&l);
            r.push(vec![
                l.into(),
                count.into(),
                (count as f64 / self.probes.max(1) as f64).into(),
                self.tail(l).into(),
                if checked { self.tail_bound(l).into() } else { Cell::Null },
                if checked { (self.tail(l) <= self.tail_bound(l)).into() } else { Cell::Null },
            ]);
        }
        r
    }
}

/// Histogram of how many stored instances an absent key collides with, on a
/// multiset maplet sized for `n` at `epsilon`.
pub fn bench_strong(n: u64, epsilon: f64, probes: u64, seed: u64) -> Result<StrongReport> {
    check_eps(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = filled(n, epsilon, Mode::Multiset, &mut rng)?;
    let mut histogram = vec![0u64; 1];
    for _ in 0..probes {
        let l = m.query_diagnosed(&(rng.random::<u64>() | PROBE_BIT)).matches;
        if l >= histogram.len() {
            histogram.resize(l + 1, 0);
        }
        histogram[l] += 1;
    }
    Ok(StrongReport { items: n, epsilon, probes, histogram })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(50, 1000, Z99);
        assert!(lo < 0.05 && 0.05 < hi);
        assert_eq!(wilson_interval(0, 1000, Z99).0, 0.0);
        assert_eq!(wilson_interval(0, 0, Z99), (0.0, 1.0));
    }

    #[test]
    fn empty_filter_never_fires() {
        let r = bench_fpr(0, 0.01, 100_000, 1).unwrap();
        assert_eq!(r.false_positives, 0);
        assert_eq!(r.rate(), 0.0);
        assert!(r.passed());
    }

    #[test]
    fn fpr_within_bound() {
        let r = bench_fpr(100_000, 2f64.powi(-10), 1_000_000, 7).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.ci_low <= r.rate() && r.rate() <= r.ci_high);
    }

    #[test]
    fn same_seed_same_report() {
        let a = bench_fpr(5000, 0.01, 100_000, 3).unwrap().report().to_tsv();
        let b = bench_fpr(5000, 0.01, 100_000, 3).unwrap().report().to_tsv();
        assert_eq!(a, b);
        assert_ne!(a, bench_fpr(5000, 0.01, 100_000, 4).unwrap().report().to_tsv());
    }

    #[test]
    fn single_item_never_collides() {
        let r = bench_strong(1, 2f64.powi(-30), 200_000, 1).unwrap();
        assert_eq!(r.histogram, vec![200_000]);
        // A 5-bit fingerprint still collides with the one stored item.
        let r = bench_strong(1, 2f64.powi(-5), 200_000, 1).unwrap();
        assert_eq!(r.histogram.len(), 2);
    }

    #[test]
    fn histogram_accounts_for_every_probe_and_decays() {
        let eps = 2f64.powi(-5);
        let r = bench_strong(20_000, eps, 2_000_000, 9).unwrap();
        assert_eq!(r.histogram.iter().sum::<u64>(), r.probes);
        assert!(r.passed(), "{:?}", r.histogram);
        for l in 0..r.histogram.len() - 1 {
            if r.histogram[l] >= 1000 {
                let ratio = r.histogram[l + 1] as f64 / r.histogram[l] as f64;
                assert!(ratio <= 2.0 * eps, "l={l} ratio={ratio}");
            }
        }
        assert_eq!(r.report().rows.len(), r.histogram.len().max(4));
    }

    #[test]
    fn bad_epsilon_rejected() {
        assert!(bench_fpr(10, 1.0, 10, 0).is_err());
        assert!(bench_strong(10, 0.0, 10, 0).is_err());
    }
}
