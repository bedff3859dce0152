//! Regenerates `data/halo_catalog.csv`.
//!
//! ```text
//! cargo run --release -p cislune --example gen_halo_catalog [-- OUT.csv [N_PER_FAMILY]]
//! ```

use std::fs::File;
use std::io::BufWriter;

use cislune::catalog::generate_halo_catalog;
use cislune::cr3bp::Cr3bpSystem;
use cislune::halo::CATALOG_FAMILIES;

fn main() -> cislune::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/halo_catalog.csv").into());
    let n: usize = match args.next() {
        Some(s) => s.parse().map_err(|_| cislune::Error::InvalidInput(format!("bad count `{s}`")))?,
        None => 1000,
    };
    let sys = Cr3bpSystem::earth_moon();
    let cat = generate_halo_catalog(&sys, &CATALOG_FAMILIES, n, 1e-12)?;
    cat.write_csv(BufWriter::new(File::create(&out)?), &sys)?;
    for f in &cat.families {
        let s = &f.states[0];
        println!(
            "{:>4}  apolune x {:>12.3} km  z {:>12.3} km  vy {:>9.6} km/s",
            f.label,
            s.r.x * sys.du,
            s.r.z * sys.du,
            s.v.y * sys.vu()
        );
    }
    println!("wrote {} states to {out}", cat.len());
    Ok(())
}
