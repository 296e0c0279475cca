//! File emission: atomic writes, figure CSVs, trace stores, manifests, and
//! run reports.
//!
//! Every writer is deterministic — no timestamps, no machine identifiers, no
//! hash-map iteration order — so a run with a fixed seed reproduces its
//! output files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use uavpower::{Error, Result};

use crate::run::EpisodeTrace;
use crate::stats::{empirical_cdf, mean, CdfTable};

/// Write a file atomically: the bytes land under a temporary name in the
/// same directory and are renamed into place, so readers never observe a
/// torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp.{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Shortest decimal representation that parses back to exactly `x`.
pub fn format_f64(x: f64) -> String {
    format!("{x}")
}

fn policy_rank(label: &str) -> (u8, String) {
    match label {
        "Closest" => (0, String::new()),
        "COMP" => (1, String::new()),
        "SAC" => (2, String::new()),
        other => (3, other.to_string()),
    }
}

/// Write an aligned time-series CSV with a `t` column followed by one column
/// per labeled series, in canonical policy order (Closest, COMP, SAC).
pub fn write_series_csv(path: &Path, columns: &[(String, Vec<f64>)]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::Validation("series CSV needs at least one column".into()));
    }
    let len = columns[0].1.len();
    if columns.iter().any(|(_, v)| v.len() != len) {
        return Err(Error::Validation("series CSV columns have unequal lengths".into()));
    }
    let mut ordered: Vec<&(String, Vec<f64>)> = columns.iter().collect();
    ordered.sort_by_key(|(label, _)| policy_rank(label));
    let mut text = String::from("t");
    for (label, _) in &ordered {
        text.push(',');
        text.push_str(label);
    }
    text.push('\n');
    for t in 0..len {
        text.push_str(&t.to_string());
        for (_, values) in &ordered {
            text.push(',');
            text.push_str(&format_f64(values[t]));
        }
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Per-step series extracted from one trace: outage averaged across users
/// and the total power fraction.
fn trace_series(trace: &EpisodeTrace) -> (Vec<f64>, Vec<f64>) {
    let outage = trace
        .steps
        .iter()
        .map(|s| s.epsilons.iter().sum::<f64>() / s.epsilons.len() as f64)
        .collect();
    let power = trace.steps.iter().map(|s| s.power_fraction).collect();
    (outage, power)
}

/// Write `outage.csv` and `power.csv` for a set of traces, one column per
/// policy (the lowest-seed trace of each), matching the figure data layout.
pub fn write_figure_csvs(dir: &Path, traces: &[EpisodeTrace]) -> Result<Vec<PathBuf>> {
    if traces.is_empty() {
        return Err(Error::Validation("no traces to write figure CSVs from".into()));
    }
    let mut chosen: BTreeMap<&str, &EpisodeTrace> = BTreeMap::new();
    for trace in traces {
        let slot = chosen.entry(trace.policy).or_insert(trace);
        if trace.seed < slot.seed {
            *slot = trace;
        }
    }
    let mut outage_cols = Vec::new();
    let mut power_cols = Vec::new();
    for (label, trace) in &chosen {
        let (outage, power) = trace_series(trace);
        outage_cols.push((label.to_string(), outage));
        power_cols.push((label.to_string(), power));
    }
    let outage_path = dir.join("outage.csv");
    let power_path = dir.join("power.csv");
    write_series_csv(&outage_path, &outage_cols)?;
    write_series_csv(&power_path, &power_cols)?;
    Ok(vec![outage_path, power_path])
}

/// Canonical trace file name for a policy/seed pair.
pub fn trace_file_name(policy: &str, seed: u64) -> String {
    format!("trace_{policy}_{seed:06}.json")
}

/// Serialize one trace into its canonical file in `dir`.
pub fn write_trace(dir: &Path, trace: &EpisodeTrace) -> Result<PathBuf> {
    let path = dir.join(trace_file_name(trace.policy, trace.seed));
    let text = serde_json::to_string(trace)?;
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// Read every `trace_*.json` in `dir`, in file-name order.
pub fn read_traces(dir: &Path) -> Result<Vec<EpisodeTrace>> {
    let mut names: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if name.starts_with("trace_") && name.ends_with(".json") {
            names.push(path);
        }
    }
    names.sort();
    let mut traces = Vec::with_capacity(names.len());
    for path in names {
        let text = fs::read_to_string(&path)?;
        let trace: EpisodeTrace = serde_json::from_str(&text)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        traces.push(trace);
    }
    Ok(traces)
}

/// Write a CDF as CSV. For outage distributions the abscissa is `log10`
/// of the value, matching how the distributions are plotted.
pub fn write_cdf_csv(path: &Path, table: &CdfTable, log10_abscissa: bool) -> Result<()> {
    let mut text = String::from(if log10_abscissa {
        "log10_value,cumulative\n"
    } else {
        "value,cumulative\n"
    });
    for (v, f) in table.values.iter().zip(&table.fractions) {
        let x = if log10_abscissa { v.log10() } else { *v };
        text.push_str(&format_f64(x));
        text.push(',');
        text.push_str(&format_f64(*f));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Provenance record written beside every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Which subcommand produced the directory.
    pub command: String,
    /// SHA-256 of the configuration document (hex).
    pub config_sha256: String,
    /// Base seed of the run.
    pub seed: u64,
    /// Package version that produced the outputs.
    pub version: String,
}

/// Write `manifest.json` describing a run.
pub fn write_manifest(dir: &Path, command: &str, config_text: &str, seed: u64) -> Result<()> {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: format!("{:x}", hasher.finalize()),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join("manifest.json"), text.as_bytes())
}

/// Aggregate statistics for one policy in one zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneReport {
    /// Policy label.
    pub policy: String,
    /// `"inside"` or `"outside"` the critical zone.
    pub zone: String,
    /// Number of (step, user) samples aggregated.
    pub samples: usize,
    /// Mean per-user power fraction.
    pub mean_power_fraction: f64,
    /// Fraction of samples with outage above the local threshold.
    pub violation_rate: f64,
    /// 10th percentile of outage.
    pub eps_p10: f64,
    /// Median outage.
    pub eps_median: f64,
    /// 90th percentile of outage.
    pub eps_p90: f64,
}

/// Per-zone summary of every trace in a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// One row per (policy, zone) with samples, ordered by policy rank then
    /// zone (inside before outside).
    pub rows: Vec<ZoneReport>,
}

/// Aggregate every trace in `dir` into per-policy, per-zone statistics.
///
/// The sample unit is one (step, user) pair: its outage, threshold, zone
/// membership, and per-user power fraction.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let traces = read_traces(dir)?;
    if traces.is_empty() {
        return Err(Error::Validation(format!(
            "no runs found in {}",
            dir.display()
        )));
    }
    struct Bucket {
        eps: Vec<f64>,
        fractions: Vec<f64>,
        violations: usize,
    }
    let mut buckets: BTreeMap<(String, bool), Bucket> = BTreeMap::new();
    for trace in &traces {
        for step in &trace.steps {
            for i in 0..step.epsilons.len() {
                let key = (trace.policy.to_string(), step.in_zone[i]);
                let bucket = buckets.entry(key).or_insert_with(|| Bucket {
                    eps: Vec::new(),
                    fractions: Vec::new(),
                    violations: 0,
                });
                bucket.eps.push(step.epsilons[i]);
                bucket.fractions.push(step.user_fractions[i]);
                if step.epsilons[i] > step.thresholds[i] {
                    bucket.violations += 1;
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(buckets.len());
    let mut keys: Vec<(String, bool)> = buckets.keys().cloned().collect();
    keys.sort_by_key(|(policy, in_zone)| (policy_rank(policy), !in_zone));
    for key in keys {
        let bucket = &buckets[&key];
        let n = bucket.eps.len();
        let cdf = empirical_cdf(&bucket.eps)?;
        rows.push(ZoneReport {
            policy: key.0,
            zone: if key.1 { "inside" } else { "outside" }.to_string(),
            samples: n,
            mean_power_fraction: mean(&bucket.fractions),
            violation_rate: bucket.violations as f64 / n as f64,
            eps_p10: cdf.quantile(0.10),
            eps_median: cdf.median(),
            eps_p90: cdf.quantile(0.90),
        });
    }
    Ok(ReportSummary { rows })
}

/// Render a report as aligned plain text.
pub fn render_report_text(summary: &ReportSummary) -> String {
    let mut text = String::from(
        "policy    zone     samples  mean_power  violation_rate  eps_median\n",
    );
    for row in &summary.rows {
        text.push_str(&format!(
            "{:<9} {:<8} {:>7}  {:>10.6}  {:>14.6}  {:>11.4e}\n",
            row.policy,
            row.zone,
            row.samples,
            row.mean_power_fraction,
            row.violation_rate,
            row.eps_median,
        ));
    }
    text
}

/// Write `report.csv` beside the traces it summarizes.
pub fn write_report_csv(dir: &Path, summary: &ReportSummary) -> Result<PathBuf> {
    let mut text = String::from(
        "policy,zone,samples,mean_power_fraction,violation_rate,eps_p10,eps_median,eps_p90\n",
    );
    for row in &summary.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.policy,
            row.zone,
            row.samples,
            format_f64(row.mean_power_fraction),
            format_f64(row.violation_rate),
            format_f64(row.eps_p10),
            format_f64(row.eps_median),
            format_f64(row.eps_p90),
        ));
    }
    let path = dir.join("report.csv");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::{run_episode, Policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use uavpower::env::{ScenarioConfig, UavEnv};

    #[test]
    fn atomic_write_replaces_without_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1, "temp files must not linger");
    }

    #[test]
    fn formatted_floats_parse_back_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut cases = vec![
            0.0,
            -0.0,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            f64::MAX,
            4.806130423766433e-20,
            1.2303236619895824e-17,
        ];
        for _ in 0..1000 {
            let bits = rng.gen::<u64>() & !(0x7ff0_0000_0000_0000); // finite
            cases.push(f64::from_bits(bits));
        }
        for x in cases {
            let parsed: f64 = format_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "round trip failed for {x:e}");
        }
    }

    #[test]
    fn series_csv_has_header_and_canonical_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let columns = vec![
            ("SAC".to_string(), vec![0.1, 0.2]),
            ("Closest".to_string(), vec![0.3, 0.4]),
            ("COMP".to_string(), vec![0.5, 0.6]),
        ];
        write_series_csv(&path, &columns).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "t,Closest,COMP,SAC");
        assert_eq!(lines[1], "0,0.3,0.5,0.1");
        assert_eq!(lines[2], "1,0.4,0.6,0.2");
    }

    #[test]
    fn missing_policy_drops_its_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_series_csv(&path, &[("COMP".to_string(), vec![1.0])]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,COMP");
    }

    #[test]
    fn unequal_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let columns = vec![
            ("SAC".to_string(), vec![0.1]),
            ("COMP".to_string(), vec![0.5, 0.6]),
        ];
        assert!(write_series_csv(&path, &columns).is_err());
    }

    fn small_traces() -> Vec<EpisodeTrace> {
        let cfg = ScenarioConfig::builtin("single_user_scaled").unwrap();
        let mut env = UavEnv::new(cfg, 0).unwrap();
        vec![
            run_episode(&Policy::Closest, &mut env, 4).unwrap(),
            run_episode(&Policy::Closest, &mut env, 2).unwrap(),
            run_episode(&Policy::FullPower, &mut env, 2).unwrap(),
        ]
    }

    #[test]
    fn figure_csvs_pick_lowest_seed_and_are_reproducible() {
        let traces = small_traces();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_figure_csvs(dir.path(), &traces).unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        let text = String::from_utf8(first[0].clone()).unwrap();
        assert!(text.lines().next().unwrap() == "t,Closest,COMP");
        // Episode length 300 -> header + 300 rows.
        assert_eq!(text.lines().count(), 301);

        let dir2 = tempfile::tempdir().unwrap();
        let paths2 = write_figure_csvs(dir2.path(), &traces).unwrap();
        for (a, b) in paths.iter().zip(&paths2) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "re-run differs");
        }
        drop(first);
    }

    #[test]
    fn traces_round_trip_through_the_store() {
        let traces = small_traces();
        let dir = tempfile::tempdir().unwrap();
        for t in &traces {
            write_trace(dir.path(), t).unwrap();
        }
        let back = read_traces(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        // ASCII file-name order: COMP seed 2, then Closest seeds 2 and 4.
        assert_eq!(back[0].policy, "COMP");
        assert_eq!(back[1].policy, "Closest");
        assert_eq!(back[1].seed, 2);
        assert_eq!(back[2].seed, 4);
        assert!(back.contains(&traces[0]));
    }

    #[test]
    fn report_on_empty_directory_names_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no runs found"));
    }

    #[test]
    fn closest_report_shows_exact_one_over_k_everywhere() {
        let traces = small_traces();
        let dir = tempfile::tempdir().unwrap();
        for t in &traces {
            write_trace(dir.path(), t).unwrap();
        }
        let summary = report(dir.path()).unwrap();
        let closest_rows: Vec<&ZoneReport> =
            summary.rows.iter().filter(|r| r.policy == "Closest").collect();
        assert!(!closest_rows.is_empty());
        for row in closest_rows {
            assert_eq!(row.mean_power_fraction, 1.0 / 6.0);
        }
        let comp_rows: Vec<&ZoneReport> =
            summary.rows.iter().filter(|r| r.policy == "COMP").collect();
        for row in comp_rows {
            assert_eq!(row.mean_power_fraction, 1.0);
            assert_eq!(row.violation_rate, 0.0);
        }
        let text = render_report_text(&summary);
        assert!(text.contains("Closest") && text.contains("inside"));
        write_report_csv(dir.path(), &summary).unwrap();
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.starts_with("policy,zone,"));
    }

    #[test]
    fn cdf_csv_uses_log_abscissa_for_outage() {
        let dir = tempfile::tempdir().unwrap();
        let table = empirical_cdf(&[1e-6, 1e-4, 1e-2]).unwrap();
        let path = dir.path().join("cdf.csv");
        write_cdf_csv(&path, &table, true).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "log10_value,cumulative");
        assert!(lines[1].starts_with("-6,"));
        assert!(lines[3].starts_with("-2,"));
    }

    #[test]
    fn manifest_contains_the_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), "train", "{\"x\":1}", 9).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let manifest: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(manifest.command, "train");
        assert_eq!(manifest.seed, 9);
        assert_eq!(manifest.config_sha256.len(), 64);
    }
}
