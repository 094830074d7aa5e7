//! Time regular, armour and kv_shared forward passes at DeiT-Ti dimensions,
//! interleaved so that all three see the same machine load.
//!
//! ```bash
//! cargo run --release -p armour --example benchmark
//! ```

use armour::bench::{run_interleaved, BenchOptions, BenchTarget};
use armour::report::{render, Format};
use armour::{AttentionConfig, AttentionVariant};

fn main() -> armour::Result<()> {
    let opts = BenchOptions {
        warmup: 10,
        iters: 50,
        seed: 0,
    };
    let targets: Vec<_> = [
        AttentionVariant::Regular,
        AttentionVariant::Armour,
        AttentionVariant::KvShared,
    ]
    .into_iter()
    .map(|v| BenchTarget::Attention(AttentionConfig::new(v, 197, 192, 3)))
    .collect();
    let reports = run_interleaved(&targets, &opts)?;
    for report in &reports {
        print!("{}", render(report, Format::Text)?);
    }
    println!(
        "armour / regular median: {:.3}",
        reports[1].median_ns / reports[0].median_ns
    );
    Ok(())
}
