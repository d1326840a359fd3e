use maplet::filter::{FilterParams, Fingerprint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BUCKET_BITS: u8 = 10;
const KEYS: usize = 1_000_000;

fn chi_square(counts: &[u64]) -> f64 {
    let expected = KEYS as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

fn critical() -> f64 {
    ChiSquared::new(((1 << BUCKET_BITS) - 1) as f64).unwrap().inverse_cdf(0.999)
}

fn params() -> FilterParams {
    FilterParams::new(BUCKET_BITS, 22, 0).unwrap().with_seed(0xfeed)
}

#[test]
fn home_slots_of_integer_keys_are_uniform() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = vec![0u64; 1 << BUCKET_BITS];
    for _ in 0..KEYS {
        counts[Fingerprint::of_u64(rng.random(), &p).home_slot(&p)] += 1;
    }
    let stat = chi_square(&counts);
    assert!(stat < critical(), "chi2 {stat} >= {}", critical());
}

#[test]
fn home_slots_of_sequential_byte_keys_are_uniform() {
    let p = params();
    let mut counts = vec![0u64; 1 << BUCKET_BITS];
    for i in 0..KEYS {
        let key = format!("key-{i}");
        counts[Fingerprint::of_key(key.as_bytes(), &p).home_slot(&p)] += 1;
    }
    let stat = chi_square(&counts);
    assert!(stat < critical(), "chi2 {stat} >= {}", critical());
}

#[test]
fn remainders_are_uniform_too() {
    let p = FilterParams::new(6, BUCKET_BITS, 0).unwrap().with_seed(3);
    let mut counts = vec![0u64; 1 << BUCKET_BITS];
    for i in 0..KEYS as u64 {
        counts[Fingerprint::of_u64(i, &p).remainder(&p) as usize] += 1;
    }
    let stat = chi_square(&counts);
    assert!(stat < critical(), "chi2 {stat} >= {}", critical());
}
