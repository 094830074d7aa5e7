//! Redundancy between weight matrices: the fraction of elements closer than
//! epsilon, across layers, per head, and with normalization.
//!
//! ```bash
//! cargo run -p armour --example redundancy
//! ```

use armour::analysis::{redundancy, redundancy_layers, RedundancyMode, RedundancyOptions};
use armour::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> armour::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let w_q = Tensor::uniform(&[16, 16], 0.05, &mut rng);
    let noise = Tensor::uniform(&[16, 16], 0.01, &mut rng);
    let w_k = w_q.add(&noise)?;
    let w_v = Tensor::uniform(&[16, 16], 0.05, &mut rng);

    for eps in [1e-3, 1e-2, 5e-2] {
        println!(
            "epsilon {eps:<6} wq/wk {:.3}  wq/wv {:.3}",
            redundancy(&w_q, &w_k, eps)?.fraction_below,
            redundancy(&w_q, &w_v, eps)?.fraction_below
        );
    }

    let per_head = RedundancyOptions {
        mode: RedundancyMode::PerHead { heads: 4 },
        normalize: false,
    };
    let report = redundancy_layers("wq_wv", &[("layer0", &w_q, &w_v)], 1e-2, per_head)?;
    for row in &report.layers {
        println!("  {}: {:.3}", row.layer, row.fraction_below);
    }

    let scaled = w_v.scale(10.0);
    let normalized = RedundancyOptions {
        normalize: true,
        ..Default::default()
    };
    let raw = redundancy(&w_v, &scaled, 1e-2)?.fraction_below;
    let norm =
        redundancy_layers("wv_10wv", &[("0", &w_v, &scaled)], 1e-2, normalized)?.fraction_below;
    println!("w_v against 10 w_v: raw {raw:.3}, normalized {norm:.3}");
    Ok(())
}
