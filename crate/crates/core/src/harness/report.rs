//! CSV and plain-text renderings of experiment reports. Output depends only on
//! the report contents, so equal reports render to equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::stats::PairedDelta;
use super::{ExperimentReport, Metric};
use crate::error::Result;

pub const ARM_CSV_HEADER: &str = "arm,control,users,words,avg_spatial_cost,spatial_delta_pct,spatial_ci_low_pct,spatial_ci_high_pct,spatial_p,top1_error_rate,error_delta_pct,error_ci_low_pct,error_ci_high_pct,error_p,autocorrect_good,autocorrect_bad";

fn pct(v: f64) -> String {
    format!("{:.4}", v * 100.0)
}

fn delta_cells(d: Option<&PairedDelta>) -> String {
    match d {
        Some(d) => format!(
            "{},{},{},{:.6}",
            pct(d.delta),
            pct(d.ci_low),
            pct(d.ci_high),
            d.p_value
        ),
        None => "NA,NA,NA,NA".to_string(),
    }
}

fn delta_text(d: Option<&PairedDelta>) -> String {
    match d {
        Some(d) => format!(
            "{:+.3}% [{:+.3}, {:+.3}] p={:.4}",
            d.delta * 100.0,
            d.ci_low * 100.0,
            d.ci_high * 100.0,
            d.p_value
        ),
        None => "n/a".to_string(),
    }
}

impl ExperimentReport {
    /// One row per arm, control first.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{ARM_CSV_HEADER}").unwrap();
        for a in &self.arms {
            writeln!(
                s,
                "{},{},{},{},{:.6},{},{:.6},{},{},{}",
                a.name,
                a.is_control,
                a.users,
                a.words,
                a.avg_spatial_cost,
                delta_cells(a.spatial_delta.as_ref()),
                a.top1_error_rate,
                delta_cells(a.error_delta.as_ref()),
                a.autocorrect_good,
                a.autocorrect_bad,
            )
            .unwrap();
        }
        s
    }

    /// Per-user metrics for every arm plus the stream checksum.
    pub fn users_csv(&self) -> String {
        let mut s = String::from("arm,user,stream_checksum,words,avg_spatial_cost,top1_error_rate,autocorrect_good,autocorrect_bad\n");
        for (arm, users) in self.arms.iter().zip(&self.per_user) {
            for (u, m) in users.iter().enumerate() {
                writeln!(
                    s,
                    "{},{},{:016x},{},{:.6},{:.6},{},{}",
                    arm.name,
                    u,
                    self.stream_checksums[u],
                    m.words,
                    m.avg_spatial_cost,
                    m.top1_error_rate,
                    m.autocorrect_good,
                    m.autocorrect_bad
                )
                .unwrap();
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "experiment {} (seed {})", self.name, self.master_seed).unwrap();
        writeln!(
            s,
            "{} users, {} measured words each; deltas are relative to the control, 95% CI",
            self.users, self.measured_words
        )
        .unwrap();
        for a in &self.arms {
            let tag = if a.is_control { " (control)" } else { "" };
            writeln!(s, "\n{}{}", a.name, tag).unwrap();
            for m in Metric::ALL {
                let delta = if a.is_control {
                    String::new()
                } else {
                    format!("  {}", delta_text(a.delta(m)))
                };
                writeln!(s, "  {:<17} {:>10.6}{}", m.name(), a.mean(m), delta).unwrap();
            }
            writeln!(
                s,
                "  autocorrect       good {} / bad {}",
                a.autocorrect_good, a.autocorrect_bad
            )
            .unwrap();
        }
        s
    }

    /// Writes `<name>.csv`, `<name>_users.csv` and `<name>.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (format!("{}.csv", self.name), self.to_csv()),
            (format!("{}_users.csv", self.name), self.users_csv()),
            (format!("{}.txt", self.name), self.to_text()),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body)?;
            out.push(p);
        }
        Ok(out)
    }
}
