//! Word counts in a saturating counter maplet. Answers never undercount.

use maplet::codec::Counter;
use maplet::maplet::{Maplet, Mode};

fn main() -> maplet::Result<()> {
    let text = "the quick brown fox jumps over the lazy dog the end";
    let mut counts = Maplet::with_capacity(1000, 1.0 / 256.0, Counter::new(8)?, Mode::MergedSlot)?;
    for word in text.split_whitespace() {
        counts.insert(word, &1)?;
    }
    for word in ["the", "fox", "cat"] {
        match counts.query(word) {
            Some(c) => println!("{word}\t{c}"),
            None => println!("{word}\tabsent"),
        }
    }
    counts.delete("the", &1)?;
    println!("the after one delete\t{}", counts.query("the").unwrap_or(0));
    println!("{} items, {} bits", counts.len(), counts.space_bits());
    Ok(())
}
