//! Tables double on demand, and two maplets with equal parameters merge
//! pointwise.

use maplet::codec::Counter;
use maplet::filter::FilterParams;
use maplet::maplet::{Maplet, Mode};

fn main() -> maplet::Result<()> {
    let op = Counter::new(16)?;
    let params = FilterParams::new(6, 10, 16)?.with_seed(7);
    let mut a = Maplet::new(params, op, Mode::MergedSlot)?;
    let mut b = Maplet::new(params, op, Mode::MergedSlot)?;
    for k in 0..500u64 {
        a.insert(&k, &1)?;
        b.insert(&(k + 250), &10)?;
    }
    println!("a grew to q={} ({} items)", a.params().quotient_bits(), a.len());
    println!("b grew to q={}", b.params().quotient_bits());

    // Merge needs identical parameters, so bring both to the same size.
    while a.params().quotient_bits() < b.params().quotient_bits() {
        a.resize_double()?;
    }
    while b.params().quotient_bits() < a.params().quotient_bits() {
        b.resize_double()?;
    }
    let merged = Maplet::merge(&a, &b)?;
    for k in [0u64, 300, 700] {
        println!("key {k}: a={:?} b={:?} merged={:?}", a.query(&k), b.query(&k), merged.query(&k));
    }
    Ok(())
}
