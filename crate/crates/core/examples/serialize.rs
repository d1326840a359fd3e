//! Round-trips a maplet through the dense and sparse on-disk layouts.

use maplet::codec::Counter;
use maplet::format::{self, AnyMaplet, Layout};
use maplet::maplet::{Maplet, Mode};

fn main() -> maplet::Result<()> {
    let mut m = Maplet::with_capacity(10_000, 1.0 / 1024.0, Counter::new(12)?, Mode::MergedSlot)?;
    for k in 0..2000u64 {
        m.insert(&k, &(k % 7 + 1))?;
    }
    for layout in [Layout::Dense, Layout::Sparse] {
        let bytes = format::to_bytes(&m, layout);
        let back: Maplet<Counter> = format::from_bytes(&bytes)?;
        assert_eq!(back.query(&42u64), m.query(&42u64));
        println!("{layout:?}: {} bytes", bytes.len());
    }

    // Readers that do not know the operator ahead of time use AnyMaplet.
    let bytes = format::to_bytes(&m, Layout::Sparse);
    let any = AnyMaplet::read(bytes.as_slice())?;
    println!("operator {:?}, mode {}, {} items", any.operator_id(), any.mode(), any.len());

    let mut corrupt = bytes.clone();
    corrupt[40] ^= 1;
    println!("corrupted: {}", AnyMaplet::read(corrupt.as_slice()).unwrap_err());
    Ok(())
}
