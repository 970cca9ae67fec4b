//! Regenerates the committed CSV fixtures in `testdata/`: a simulated
//! 105-pool network exported in the schema the ingestion layer reads.
//!
//! Run from the repository root: `cargo run -p powevo --example gen_testdata`

use std::fs::File;
use std::path::Path;

use powevo::chain_data::{write_blocks_csv, write_forks_csv};
use powevo::mining_sim::{simulate_with_ledger, SimConfig};
use powevo::{HashDistribution, NetworkParams};

fn main() {
    // Five large pools plus one hundred small ones.
    let mut weights = vec![0.33, 0.21, 0.11, 0.08, 0.04];
    weights.extend(std::iter::repeat(0.0023).take(100));
    let x = HashDistribution::from_weights(&weights).unwrap();
    let params = NetworkParams::new(0.1, 2.2314, 100.0, 0.0).unwrap();
    let cfg = SimConfig::new(params, x, 9_500, 20260816);
    let (_, ledger) = simulate_with_ledger(&cfg).unwrap();

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    std::fs::create_dir_all(&dir).unwrap();
    let blocks = File::create(dir.join("sample_blocks.csv")).unwrap();
    write_blocks_csv(&ledger.blocks, blocks).unwrap();
    let forks = File::create(dir.join("sample_forks.csv")).unwrap();
    write_forks_csv(&ledger.forks, forks).unwrap();
    println!("wrote {} blocks and {} forks", ledger.blocks.len(), ledger.forks.len());
}
