//! Measures the false-positive rate and the multi-match tail of a maplet.

use maplet::bench::{bench_fpr, bench_strong};

fn main() -> maplet::Result<()> {
    let fpr = bench_fpr(50_000, 1.0 / 256.0, 500_000, 1)?;
    fpr.report().write_pretty(std::io::stdout().lock())?;
    println!("within bound: {}", fpr.passed());

    let strong = bench_strong(50_000, 1.0 / 32.0, 1_000_000, 1)?;
    strong.report().write_pretty(std::io::stdout().lock())?;
    for l in 1..strong.histogram.len() {
        println!("Pr[l>={l}] = {:.3e} (bound {:.3e})", strong.tail(l), strong.tail_bound(l));
    }
    Ok(())
}
