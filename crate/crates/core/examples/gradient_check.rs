//! Check analytic gradients of every block variant against central finite
//! differences.
//!
//! ```bash
//! cargo run --release -p armour --example gradient_check
//! ```

use armour::gradcheck::{gradcheck_attention, gradcheck_levit};
use armour::report::{render, Format};
use armour::{AttentionConfig, AttentionVariant, LevitBlockConfig, LevitVariant};

fn main() -> armour::Result<()> {
    for variant in AttentionVariant::ALL {
        let report = gradcheck_attention(&AttentionConfig::new(variant, 4, 8, 2), 1)?;
        print!("{}", render(&report, Format::Text)?);
    }
    for variant in LevitVariant::ALL {
        let report = gradcheck_levit(&LevitBlockConfig::new(variant, 2, 4, 2, 2, 8), 1)?;
        print!("{}", render(&report, Format::Text)?);
    }
    Ok(())
}
