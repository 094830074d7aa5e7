//! Train the two-block toy classifier with regular and armour attention on
//! the same seeded task, then compare accuracy and weight redundancy.
//!
//! ```bash
//! cargo run --release -p armour --example toy_training
//! ```

use armour::train::{probe_records, train, ToyTask, TrainOptions};
use armour::AttentionVariant;

fn main() -> armour::Result<()> {
    let task = ToyTask::default();
    let opts = TrainOptions::default();
    let mut records = Vec::new();
    for variant in [AttentionVariant::Regular, AttentionVariant::Armour] {
        let record = train(variant, &task, &opts)?;
        println!(
            "{variant:>8}: {} params, eval acc {:.3} -> {:.3}, eval loss {:.4} -> {:.4}",
            record.param_count,
            record.initial_eval_accuracy,
            record.final_eval_accuracy(),
            record.initial_eval_loss,
            record.final_eval_loss(),
        );
        for e in &record.epochs {
            println!(
                "    epoch {:>3}  train {:.4}  eval {:.4}  acc {:.3}  {:.0} ms",
                e.epoch, e.train_loss, e.eval_loss, e.eval_accuracy, e.wall_ms
            );
        }
        records.push(record);
    }

    let probe = probe_records(&records[0], &records[1])?;
    println!("\nredundancy at epsilon = {}", probe.epsilon);
    for row in &probe.rows {
        println!(
            "  {:>8} {}: {:.4}",
            row.model.as_str(),
            row.report.pair,
            row.report.fraction_below
        );
    }
    println!(
        "  regular wq_wk more redundant than wq_wv: {}",
        probe.regular_qk_exceeds_qv
    );
    Ok(())
}
