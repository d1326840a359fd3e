//! Compares per-SSTable filters with a single routing maplet on a small
//! simulated LSM tree.

use maplet::lsm::{self, Compaction, LsmConfig};

fn main() -> maplet::Result<()> {
    for compaction in [Compaction::Leveled, Compaction::SizeTiered] {
        let cfg = LsmConfig {
            compaction,
            levels: 3,
            queries: 20_000,
            ..LsmConfig::default()
        };
        let out = lsm::simulate(&cfg)?;
        println!("# {compaction}");
        out.report().write_pretty(std::io::stdout().lock())?;
    }
    Ok(())
}
