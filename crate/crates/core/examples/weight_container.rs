//! Write attention weights to an ARMW container, read them back, and show
//! that the variant check rejects weights of the wrong shape family.
//!
//! ```bash
//! cargo run -p armour --example weight_container
//! ```

use armour::io::{DType, WeightContainer};
use armour::{AttentionConfig, AttentionVariant, AttentionWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> armour::Result<()> {
    let cfg = AttentionConfig::new(AttentionVariant::Armour, 4, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut container = WeightContainer::new();
    for layer in 0..2 {
        AttentionWeights::init(&cfg, &mut rng).export(
            &mut container,
            &format!("layer{layer}."),
            DType::F32,
        )?;
    }

    let path = std::env::temp_dir().join("armour_example.armw");
    container.save(&path)?;
    let loaded = WeightContainer::load(&path)?;
    println!(
        "{} tensors, {} bytes, identical after reload: {}",
        loaded.len(),
        loaded.to_bytes().len(),
        loaded == container
    );
    for e in loaded.entries().iter().take(4) {
        println!("  {:<12} {:?} {:?}", e.name, e.dtype, e.tensor.shape());
    }

    let w = AttentionWeights::import(&loaded, "layer1.", &cfg)?;
    println!("layer1 imported as armour: {} params", w.param_count());
    match AttentionWeights::import(
        &loaded,
        "layer1.",
        &cfg.with_variant(AttentionVariant::Regular),
    ) {
        Ok(_) => println!("unexpected: regular import succeeded"),
        Err(e) => println!("regular import rejected: {e}"),
    }
    std::fs::remove_file(path)?;
    Ok(())
}
