//! Report serialization: JSON for machines, a text table for humans, and the
//! per-pair SSIM CSV that the determinism check diffs byte-for-byte.

use std::fmt::Write as _;
use std::path::Path;

use fedpix_core::report::{ComparisonReport, ModelKind};

pub fn write_report_json(path: &Path, report: &ComparisonReport) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// CSV of every per-pair SSIM value: one row per test pair, one column per
/// model. Float formatting is Rust's shortest round-trip form, so equal runs
/// produce byte-identical files.
pub fn per_pair_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("test_set,pair_id,baseline_a,baseline_b,central,federated\n");
    for ts in &report.test_sets {
        for (i, pair_id) in ts.pair_ids.iter().enumerate() {
            let _ = write!(out, "{},{}", ts.test_set, pair_id);
            for kind in ModelKind::ALL {
                let _ = write!(out, ",{}", ts.cell(kind).per_pair[i]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_per_pair_csv(path: &Path, report: &ComparisonReport) -> anyhow::Result<()> {
    std::fs::write(path, per_pair_csv(report))?;
    Ok(())
}

/// Human-readable summary with mean +/- SD per model per test set and the
/// pairwise p matrices; `*` marks significance at p < 0.05.
pub fn report_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fedpix comparison report (version {})", report.version);
    for ts in &report.test_sets {
        let _ = writeln!(out, "\n== {} ({} pairs) ==", ts.test_set, ts.pair_ids.len());
        let _ = writeln!(out, "{:<12} {:>8} {:>8}", "model", "mean", "sd");
        for kind in ModelKind::ALL {
            let cell = ts.cell(kind);
            let _ = writeln!(out, "{:<12} {:>8.4} {:>8.4}", kind.label(), cell.mean, cell.sd);
        }
        let _ = writeln!(out, "\npairwise Wilcoxon two-sided p (* marks p < 0.05):");
        let _ = write!(out, "{:<12}", "");
        for kind in ModelKind::ALL {
            let _ = write!(out, "{:>12}", kind.label());
        }
        out.push('\n');
        for a in ModelKind::ALL {
            let _ = write!(out, "{:<12}", a.label());
            for b in ModelKind::ALL {
                if a == b {
                    let _ = write!(out, "{:>12}", "-");
                } else {
                    let p = ts.p(a, b);
                    let star = if p < 0.05 { "*" } else { "" };
                    let _ = write!(out, "{:>11.4}{}", p, if star.is_empty() { " " } else { star });
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_report_txt(path: &Path, report: &ComparisonReport) -> anyhow::Result<()> {
    std::fs::write(path, report_text(report))?;
    Ok(())
}
