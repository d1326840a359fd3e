//! Summary-cache simulation: peers share what they cache through either one
//! filter per peer or a single maplet fed by small delta maplets.

use maplet::cache::{self, CacheConfig, DeltaMaplet};
use maplet::codec::Bitset;
use maplet::maplet::{Maplet, Mode};

fn main() -> maplet::Result<()> {
    // One delta by hand.
    let op = Bitset::new(4)?;
    let mut global = Maplet::with_capacity(100, 1.0 / 1024.0, op, Mode::Multiset)?;
    let mut delta = DeltaMaplet::new(global.params(), 8)?;
    delta.record_add("/index.html")?;
    delta.record_add("/logo.png")?;
    let wire = delta.to_bytes();
    let applied = cache::apply_delta(&mut global, 2, &DeltaMaplet::from_bytes(&wire)?)?;
    println!("delta of {} bytes applied: {applied:?}", wire.len());
    println!("/logo.png at peers {:?}", global.query("/logo.png"));

    // A full run.
    let cfg = CacheConfig {
        peers: 8,
        cache_size: 500,
        rounds: 20,
        lookups: 20_000,
        ..CacheConfig::default()
    };
    let out = cache::simulate(&cfg)?;
    out.report().write_pretty(std::io::stdout().lock())
}
