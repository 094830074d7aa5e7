//! Run every attention variant on the same input and show that the shared
//! variants are regular attention with tied weights.
//!
//! ```bash
//! cargo run -p armour --example attention_variants
//! ```

use armour::attention::{self, attention_probabilities, untie_weights};
use armour::autodiff::Eager;
use armour::{AttentionConfig, AttentionVariant, AttentionWeights, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> armour::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = Tensor::uniform(&[5, 8], 1.0, &mut rng);

    for variant in AttentionVariant::ALL {
        let cfg = AttentionConfig::new(variant, 5, 8, 2);
        let w = AttentionWeights::init(&cfg, &mut rng);
        let y = attention::forward(&mut Eager, &x, &w, &cfg)?;
        let names: Vec<_> = w.named().into_iter().map(|(n, _)| n).collect();
        println!(
            "{variant:<22} {:>4} params  weights {names:?}  out[0][..3] = {:.4?}",
            cfg.param_count(),
            &y.data()[..3]
        );

        if matches!(
            variant,
            AttentionVariant::Armour | AttentionVariant::KvShared
        ) {
            let regular_cfg = cfg.with_variant(AttentionVariant::Regular);
            let tied = untie_weights(&w, variant)?;
            let z = attention::forward(&mut Eager, &x, &tied, &regular_cfg)?;
            println!("{:<22} tied regular attention identical: {}", "", y == z);
        }
        if variant == AttentionVariant::QkSharedDiagMasked {
            let p = attention_probabilities(&x, &w, &cfg)?;
            let diag: Vec<f64> = (0..5).map(|i| p.data()[i * 5 + i]).collect();
            println!("{:<22} head 0 diagonal probabilities {diag:?}", "");
        }
    }
    Ok(())
}
