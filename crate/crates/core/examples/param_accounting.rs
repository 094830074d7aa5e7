//! Parameter and MAC accounting for DeiT-Ti/S/B with each attention variant.
//!
//! ```bash
//! cargo run -p armour --example param_accounting
//! ```

use armour::analysis::{model_flop_count, param_report, ArchSpec};
use armour::report::{render, Format};
use armour::AttentionVariant;

fn main() -> armour::Result<()> {
    let ti = ArchSpec::builtin("deit-ti")?;
    print!(
        "{}",
        render(&param_report(&ti, AttentionVariant::Armour)?, Format::Text)?
    );

    println!();
    for arch in ["deit-ti", "deit-s", "deit-b"] {
        let spec = ArchSpec::builtin(arch)?;
        let r = param_report(&spec, AttentionVariant::Armour)?;
        let reg = model_flop_count(&spec, 197)?;
        let arm = model_flop_count(&spec.with_attention_variant(AttentionVariant::Armour), 197)?;
        println!(
            "{arch:<8} {:.1}M -> {:.1}M ({:+.2}%)  GMACs {:.3} -> {:.3}",
            r.baseline_total as f64 / 1e6,
            r.total as f64 / 1e6,
            r.delta_pct,
            reg.total_macs as f64 / 1e9,
            arm.total_macs as f64 / 1e9
        );
    }
    Ok(())
}
