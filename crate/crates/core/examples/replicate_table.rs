//! Runs a replication experiment from a JSON configuration and prints the
//! selection counts table. Defaults to the decisive pair of spaces on
//! Brownian data with a reduced number of replications.
//!
//! ```text
//! cargo run --release --example replicate_table -- [config.json] [replications]
//! ```

use std::path::PathBuf;

use mcarma::harness::{cmd_replicate, ExperimentConfig};

fn main() -> mcarma::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pair_brownian.json")));
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.replications = args.next().map_or(10, |a| a.parse().expect("replications must be an integer"));
    cfg.validate()?;

    let summary = cmd_replicate(&cfg)?;
    println!("{} replications of n = {} written to {}", summary.replications, summary.n_obs, cfg.out_dir().display());
    print!("{}", summary.counts_csv()?);
    if let Some(o) = &summary.overfit {
        println!("overfit of {} within {}: {}/{}", o.inner, o.outer, o.overfits, o.compared);
    }
    Ok(())
}
