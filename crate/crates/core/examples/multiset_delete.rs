//! A multiset maplet storing one bitset instance per insert, so deletes
//! remove exactly the instance that was added.

use maplet::codec::Bitset;
use maplet::maplet::{Maplet, Mode};

fn main() -> maplet::Result<()> {
    let op = Bitset::new(8)?;
    let mut owners = Maplet::with_capacity(100, 0.01, op, Mode::Multiset)?;
    owners.insert("report.pdf", &op.singleton(1)?)?;
    owners.insert("report.pdf", &op.singleton(4)?)?;
    owners.insert("notes.txt", &op.singleton(2)?)?;
    println!("report.pdf held by {:?}", owners.query("report.pdf"));

    owners.delete("report.pdf", &op.singleton(1)?)?;
    println!("after node 1 leaves: {:?}", owners.query("report.pdf"));

    // Deleting something never inserted is refused.
    let err = owners.delete("notes.txt", &op.singleton(7)?).unwrap_err();
    println!("bogus delete: {err}");
    Ok(())
}
