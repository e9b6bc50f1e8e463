//! Report step: scan a results directory for aggregate CSVs, print a
//! summary table, and optionally render one SVG per aggregate curve.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{final_mean, plateau_iteration};
use crate::plot::{write_line_plot, Series};

#[derive(Debug, Clone)]
pub struct CurveSummary {
    pub label: String,
    pub path: PathBuf,
    pub iterations: usize,
    pub final_mean: f64,
    pub plateau: usize,
    pub seeds: usize,
    pub points: Vec<(f64, f64, f64)>,
}

fn read_aggregate(path: &Path) -> Result<CurveSummary> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut seeds = 0usize;
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Csv(format!("{}: short row", path.display())))?
                .parse::<f64>()
                .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
        };
        points.push((get(0)?, get(1)?, get(2)?));
        seeds = seeds.max(get(5)? as usize);
    }
    let curve: Vec<f64> = points.iter().map(|p| p.1).collect();
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_end_matches("_aggregate").to_string())
        .unwrap_or_default();
    Ok(CurveSummary {
        label,
        path: path.to_path_buf(),
        iterations: curve.len(),
        final_mean: final_mean(&curve),
        plateau: plateau_iteration(&curve),
        seeds,
        points,
    })
}

/// Summarizes every `*_aggregate.csv` under `dir`, sorted by name.
pub fn summarize_dir(dir: &Path) -> Result<Vec<CurveSummary>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().ends_with("_aggregate.csv"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_aggregate(p)).collect()
}

pub fn render_table(summaries: &[CurveSummary]) -> String {
    let mut s = String::from(
        "experiment                      iters  seeds  plateau  final mean\n",
    );
    for c in summaries {
        s.push_str(&format!(
            "{:<32} {:>5} {:>6} {:>8} {:>11.4}\n",
            c.label, c.iterations, c.seeds, c.plateau, c.final_mean
        ));
    }
    s
}

/// Writes `report_summary.csv` plus, when requested, one SVG per curve.
pub fn write_report(dir: &Path, plots: bool) -> Result<Vec<CurveSummary>> {
    let summaries = summarize_dir(dir)?;
    let path = dir.join("report_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["label", "iterations", "seeds", "plateau_iteration", "final_mean"])?;
    for c in &summaries {
        w.write_record([
            c.label.clone(),
            c.iterations.to_string(),
            c.seeds.to_string(),
            c.plateau.to_string(),
            c.final_mean.to_string(),
        ])?;
    }
    w.flush()?;
    if plots {
        for c in &summaries {
            let svg = dir.join(format!("{}.svg", c.label));
            write_line_plot(
                &svg,
                &c.label,
                &[Series {
                    label: "raw return",
                    points: c.points.clone(),
                }],
            )?;
        }
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tiny_ppo_config;
    use crate::experiment::run_experiment;

    #[test]
    fn report_reads_back_what_the_experiment_wrote() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_ppo_config(dir.path(), &[1, 2]);
        let outcome = run_experiment(&cfg).unwrap();
        let summaries = write_report(dir.path(), true).unwrap();
        assert_eq!(summaries.len(), 1);
        let c = &summaries[0];
        assert_eq!(c.label, "tiny");
        assert_eq!(c.seeds, 2);
        assert_eq!(c.iterations, outcome.aggregate.len());
        let expected = final_mean(&outcome.return_curve());
        assert!((c.final_mean - expected).abs() < 1e-12);
        assert!(dir.path().join("report_summary.csv").exists());
        assert!(dir.path().join("tiny.svg").exists());
    }
}
