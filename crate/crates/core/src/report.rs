//! Report rendering: one JSON object per line, or aligned plain text.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{FlopReport, ParamReport, RedundancyReport};
use crate::bench::BenchReport;
use crate::error::{ArmourError, Result};
use crate::gradcheck::GradCheckReport;
use crate::io::WeightContainer;
use crate::train::{EntanglementReport, TrainRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Text,
    Jsonl,
}

impl FromStr for Format {
    type Err = ArmourError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "jsonl" => Ok(Self::Jsonl),
            _ => Err(ArmourError::Config(format!(
                "unknown format `{s}` (expected text or jsonl)"
            ))),
        }
    }
}

/// Human-readable rendering of a report. Output ends with a newline.
pub trait TextReport {
    fn to_text(&self) -> String;
}

/// Renders a report in the requested format, newline-terminated.
pub fn render<T: Serialize + TextReport>(report: &T, format: Format) -> Result<String> {
    match format {
        Format::Text => Ok(report.to_text()),
        Format::Jsonl => Ok(serde_json::to_string(report)? + "\n"),
    }
}

/// Parses every non-blank line of a jsonl document.
pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(ArmourError::from))
        .collect()
}

/// Column-aligned table; the first column is left-aligned, the rest right-aligned.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

/// Integer with thousands separators.
pub fn grouped(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn millions(n: usize) -> String {
    format!("{:.1}M", n as f64 / 1e6)
}

impl TextReport for GradCheckReport {
    fn to_text(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut out = format!(
            "gradcheck {} {} seed {}: {verdict} (max rel err {:.3e}, tolerance {:.0e})\n",
            self.block, self.variant, self.seed, self.max_rel_err, self.tolerance
        );
        let rows: Vec<_> = self
            .tensors
            .iter()
            .map(|t| vec![format!("  {}", t.name), format!("{:.3e}", t.max_rel_err)])
            .collect();
        out.push_str(&table(&["  tensor", "max rel err"], &rows));
        out
    }
}

impl TextReport for RedundancyReport {
    fn to_text(&self) -> String {
        let mut out = format!(
            "{}: {:.4} of {} elements below epsilon {}\n",
            self.pair, self.fraction_below, self.element_count, self.epsilon
        );
        let rows: Vec<_> = self
            .layers
            .iter()
            .map(|l| {
                vec![
                    format!("  {}", l.layer),
                    format!("{:.4}", l.fraction_below),
                    l.below.to_string(),
                    l.element_count.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(&["  layer", "fraction", "below", "elements"], &rows));
        out
    }
}

impl TextReport for ParamReport {
    fn to_text(&self) -> String {
        let rows: Vec<_> = self
            .layers
            .iter()
            .map(|l| {
                vec![
                    l.name.clone(),
                    l.kind.clone(),
                    l.count.to_string(),
                    grouped(l.params_each as u64),
                    grouped(l.params_total as u64),
                ]
            })
            .collect();
        let mut out = format!("{} with {} attention\n", self.arch, self.variant);
        out.push_str(&table(&["layer", "kind", "count", "each", "total"], &rows));
        let _ = writeln!(
            out,
            "regular total  {:>12}  ({})",
            grouped(self.baseline_total as u64),
            millions(self.baseline_total)
        );
        let _ = writeln!(
            out,
            "{:<14} {:>12}  ({})",
            format!("{} total", self.variant),
            grouped(self.total as u64),
            millions(self.total)
        );
        let _ = writeln!(
            out,
            "delta          {:>12}  ({:+.2}%)",
            format!("-{}", grouped(self.saved as u64)),
            self.delta_pct
        );
        out
    }
}

impl TextReport for FlopReport {
    fn to_text(&self) -> String {
        let rows: Vec<_> = self
            .layers
            .iter()
            .map(|l| {
                vec![
                    l.name.clone(),
                    l.kind.clone(),
                    l.count.to_string(),
                    grouped(l.macs),
                    grouped(l.macs * l.count as u64),
                ]
            })
            .collect();
        let mut out = format!(
            "{} at {} tokens (multiply-accumulates)\n",
            self.arch, self.seq_len
        );
        out.push_str(&table(&["layer", "kind", "count", "each", "total"], &rows));
        let _ = writeln!(
            out,
            "q/k/v projections  {:>16}",
            grouped(self.projection_macs)
        );
        let _ = writeln!(
            out,
            "attention matmuls  {:>16}",
            grouped(self.attention_matmul_macs)
        );
        let _ = writeln!(out, "total              {:>16}", grouped(self.total_macs));
        out
    }
}

impl TextReport for BenchReport {
    fn to_text(&self) -> String {
        let mut out = format!(
            "{:<22} median {:>12.0} ns  p10 {:>12.0} ns  p90 {:>12.0} ns  ({} iters)",
            self.variant, self.median_ns, self.p10_ns, self.p90_ns, self.iters
        );
        if let Some(t) = self.transpose_median_ns {
            let _ = write!(out, "  transpose {t:.0} ns");
        }
        out.push('\n');
        out
    }
}

impl TextReport for TrainRecord {
    fn to_text(&self) -> String {
        let mut out = format!(
            "{}: {} params, eval accuracy {:.3} -> {:.3}, eval loss {:.4} -> {:.4}\n",
            self.variant,
            self.param_count,
            self.initial_eval_accuracy,
            self.final_eval_accuracy(),
            self.initial_eval_loss,
            self.final_eval_loss()
        );
        let rows: Vec<_> = self
            .epochs
            .iter()
            .map(|e| {
                vec![
                    e.epoch.to_string(),
                    format!("{:.4}", e.train_loss),
                    format!("{:.4}", e.eval_loss),
                    format!("{:.3}", e.eval_accuracy),
                    format!("{:.0}", e.wall_ms),
                ]
            })
            .collect();
        out.push_str(&table(
            &["epoch", "train loss", "eval loss", "eval acc", "ms"],
            &rows,
        ));
        out
    }
}

impl TextReport for EntanglementReport {
    fn to_text(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model.to_string(),
                    r.report.pair.clone(),
                    format!("{:.4}", r.report.fraction_below),
                ]
            })
            .collect();
        let mut out = format!("redundancy at epsilon {}\n", self.epsilon);
        out.push_str(&table(&["model", "pair", "fraction"], &rows));
        let _ = writeln!(
            out,
            "regular wq_wk above wq_wv: {}",
            self.regular_qk_exceeds_qv
        );
        out
    }
}

/// Listing of a weight container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerSummary {
    pub path: String,
    pub tensors: Vec<TensorSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSummary {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

impl ContainerSummary {
    pub fn new(path: &str, container: &WeightContainer) -> Self {
        Self {
            path: path.to_string(),
            tensors: container
                .entries()
                .iter()
                .map(|e| TensorSummary {
                    name: e.name.clone(),
                    dtype: serde_json::to_value(e.dtype)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    shape: e.tensor.shape().to_vec(),
                })
                .collect(),
        }
    }
}

impl TextReport for ContainerSummary {
    fn to_text(&self) -> String {
        let rows: Vec<_> = self
            .tensors
            .iter()
            .map(|t| vec![t.name.clone(), t.dtype.clone(), format!("{:?}", t.shape)])
            .collect();
        let mut out = format!("{}: {} tensors\n", self.path, self.tensors.len());
        out.push_str(&table(&["name", "dtype", "shape"], &rows));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping() {
        assert_eq!(grouped(0), "0");
        assert_eq!(grouped(999), "999");
        assert_eq!(grouped(5_717_416), "5,717,416");
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }

    #[test]
    fn format_parsing() {
        assert_eq!("jsonl".parse::<Format>().unwrap(), Format::Jsonl);
        assert!("xml".parse::<Format>().is_err());
    }
}
