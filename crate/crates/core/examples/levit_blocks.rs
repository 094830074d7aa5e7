//! The LeViT-style block and its two compact value variants: parameter
//! savings, MACs, and the tied-weight identity for `half_v_concat_q`.
//!
//! ```bash
//! cargo run -p armour --example levit_blocks
//! ```

use armour::analysis::levit_block_macs;
use armour::autodiff::Eager;
use armour::levit::{
    block_param_count, block_param_savings, expand_half_v_to_baseline, levit_block_forward,
};
use armour::{LevitBlockConfig, LevitBlockWeights, LevitVariant, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> armour::Result<()> {
    let base = LevitBlockConfig::new(LevitVariant::Baseline, 4, 16, 7, 7, 128);
    println!("N=4 heads, D=16, 7x7 tokens, C=128 channels");
    for variant in LevitVariant::ALL {
        let cfg = base.with_variant(variant);
        let macs = levit_block_macs(&cfg);
        println!(
            "  {variant:<16} {:>6} params  saves {:>6}  projection MACs {:>9}",
            block_param_count(&cfg),
            block_param_savings(&cfg),
            macs.projection
        );
    }

    let cfg = LevitBlockConfig::new(LevitVariant::HalfVConcatQ, 2, 4, 3, 3, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform(&[cfg.tokens(), cfg.in_channels], 1.0, &mut rng);
    let w = LevitBlockWeights::init(&cfg, &mut rng);
    let half = levit_block_forward(&mut Eager, &x, &w, &cfg)?;
    let expanded = expand_half_v_to_baseline(&w, &cfg)?;
    let baseline = levit_block_forward(
        &mut Eager,
        &x,
        &expanded,
        &cfg.with_variant(LevitVariant::Baseline),
    )?;
    println!(
        "\nhalf_v_concat_q equals baseline with P_V := [P_V | P_Q] per head: {}",
        half == baseline
    );
    Ok(())
}
