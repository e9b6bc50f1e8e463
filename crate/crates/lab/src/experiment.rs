//! Seeded experiment runs: one metrics CSV per seed, one aggregate CSV per
//! experiment (mean and standard error per iteration), and a sweep driver
//! over temperature grids. Reruns with the same config are bit-identical.

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use earl_core::envs::Env;
use earl_learn::ppo;
use earl_learn::sac;
use earl_learn::schedule::ScheduleKind;

use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{Error, Result};

/// One metrics row, either learner. The off-policy extras stay `None` for
/// on-policy runs and the CSV keeps the shorter header.
#[derive(Debug, Clone, Copy)]
pub struct MetricRow {
    pub iteration: usize,
    pub raw_return_mean: f64,
    pub raw_return_std: f64,
    pub entropy_mean: f64,
    pub alpha: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub buffer_size: Option<usize>,
    pub target_divergence: Option<f64>,
}

impl From<ppo::IterationMetrics> for MetricRow {
    fn from(m: ppo::IterationMetrics) -> Self {
        Self {
            iteration: m.iteration,
            raw_return_mean: m.raw_return_mean,
            raw_return_std: m.raw_return_std,
            entropy_mean: m.entropy_mean,
            alpha: m.alpha,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            kl: m.kl,
            buffer_size: None,
            target_divergence: None,
        }
    }
}

impl From<sac::SacMetrics> for MetricRow {
    fn from(m: sac::SacMetrics) -> Self {
        Self {
            iteration: m.iteration,
            raw_return_mean: m.raw_return_mean,
            raw_return_std: m.raw_return_std,
            entropy_mean: m.entropy_mean,
            alpha: m.alpha,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            kl: m.kl,
            buffer_size: Some(m.buffer_size),
            target_divergence: Some(m.target_divergence),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub path: PathBuf,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub iteration: usize,
    pub return_mean: f64,
    /// Sample standard error across seeds; 0 for a single seed.
    pub return_stderr: f64,
    pub entropy_mean: f64,
    pub alpha: f64,
    /// Seeds contributing to this row; fewer than requested marks failures.
    pub seeds: usize,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub label: String,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, String)>,
    pub aggregate: Vec<AggregateRow>,
    pub aggregate_path: PathBuf,
}

impl ExperimentOutcome {
    /// Aggregate raw-return curve, one point per iteration.
    pub fn return_curve(&self) -> Vec<f64> {
        self.aggregate.iter().map(|r| r.return_mean).collect()
    }

    /// Per-seed curve of raw returns.
    pub fn seed_curves(&self) -> Vec<Vec<f64>> {
        self.runs
            .iter()
            .map(|r| r.rows.iter().map(|m| m.raw_return_mean).collect())
            .collect()
    }
}

/// Mean of the last ten entries (all of them when shorter): the settled
/// value a run is judged by.
pub fn final_mean(curve: &[f64]) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    let tail = &curve[curve.len().saturating_sub(10)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Smallest iteration whose value reaches the settled value minus 0.05.
pub fn plateau_iteration(curve: &[f64]) -> usize {
    let target = final_mean(curve) - 0.05;
    curve
        .iter()
        .position(|&v| v >= target)
        .unwrap_or(curve.len().saturating_sub(1))
}

fn run_one_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MetricRow>> {
    let schedule = cfg.build_schedule()?;
    let mut env = cfg.build_env(seed)?;
    Ok(match cfg.learner_kind()? {
        LearnerKind::Ppo => {
            let run = ppo::train(&mut env, &cfg.ppo_config()?, &schedule, seed)?;
            run.metrics.into_iter().map(MetricRow::from).collect()
        }
        LearnerKind::Sac => {
            let run = sac::sac_train(&mut env, &cfg.sac_config()?, &schedule, seed)?;
            run.metrics.into_iter().map(MetricRow::from).collect()
        }
    })
}

fn write_seed_csv(path: &Path, rows: &[MetricRow], off_policy: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "iteration",
        "raw_return_mean",
        "raw_return_std",
        "entropy_mean",
        "alpha",
        "policy_loss",
        "value_loss",
        "kl",
    ];
    if off_policy {
        header.extend(["buffer_size", "target_divergence"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.iteration.to_string(),
            r.raw_return_mean.to_string(),
            r.raw_return_std.to_string(),
            r.entropy_mean.to_string(),
            r.alpha.to_string(),
            r.policy_loss.to_string(),
            r.value_loss.to_string(),
            r.kl.to_string(),
        ];
        if off_policy {
            record.push(r.buffer_size.unwrap_or(0).to_string());
            record.push(r.target_divergence.unwrap_or(0.0).to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error per iteration across seed curves. Rows align by
/// index; shorter runs simply stop contributing.
pub fn aggregate(curves: &[&[MetricRow]]) -> Vec<AggregateRow> {
    let longest = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(longest);
    for i in 0..longest {
        let rows: Vec<&MetricRow> = curves.iter().filter_map(|c| c.get(i)).collect();
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.raw_return_mean).sum::<f64>() / n;
        let var = if rows.len() > 1 {
            rows.iter()
                .map(|r| (r.raw_return_mean - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        out.push(AggregateRow {
            iteration: i,
            return_mean: mean,
            return_stderr: (var / n).sqrt(),
            entropy_mean: rows.iter().map(|r| r.entropy_mean).sum::<f64>() / n,
            alpha: rows.iter().map(|r| r.alpha).sum::<f64>() / n,
            seeds: rows.len(),
        });
    }
    out
}

fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "return_mean",
        "return_stderr",
        "entropy_mean",
        "alpha",
        "seeds",
    ])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.return_mean.to_string(),
            r.return_stderr.to_string(),
            r.entropy_mean.to_string(),
            r.alpha.to_string(),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads per-seed CSVs back and rebuilds the aggregate rows, for the
/// round-trip consistency check.
pub fn aggregate_from_files(paths: &[PathBuf]) -> Result<Vec<AggregateRow>> {
    let mut curves = Vec::new();
    for path in paths {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows: Vec<MetricRow> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Csv(format!("{}: short row", path.display())))?
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
            };
            rows.push(MetricRow {
                iteration: field(0)? as usize,
                raw_return_mean: field(1)?,
                raw_return_std: field(2)?,
                entropy_mean: field(3)?,
                alpha: field(4)?,
                policy_loss: field(5)?,
                value_loss: field(6)?,
                kl: field(7)?,
                buffer_size: None,
                target_divergence: None,
            });
        }
        curves.push(rows);
    }
    let views: Vec<&[MetricRow]> = curves.iter().map(|c| c.as_slice()).collect();
    Ok(aggregate(&views))
}

/// Runs every seed in the config, writes per-seed and aggregate CSVs under
/// the output directory, and returns the curves. Per-seed failures are
/// recorded and leave the aggregate marked with fewer contributing seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.run.output_dir)?;
    let off_policy = cfg.learner_kind()? == LearnerKind::Sac;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.run.seeds {
        match run_one_seed(cfg, seed) {
            Ok(rows) => {
                let path = cfg
                    .run
                    .output_dir
                    .join(format!("{}_seed{seed}.csv", cfg.run.label));
                write_seed_csv(&path, &rows, off_policy)?;
                runs.push(SeedRun { seed, path, rows });
            }
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    if runs.is_empty() {
        let detail = failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Training(format!("every seed failed: {detail}")));
    }
    let views: Vec<&[MetricRow]> = runs.iter().map(|r| r.rows.as_slice()).collect();
    let agg = aggregate(&views);
    let aggregate_path = cfg
        .run
        .output_dir
        .join(format!("{}_aggregate.csv", cfg.run.label));
    write_aggregate_csv(&aggregate_path, &agg)?;
    Ok(ExperimentOutcome {
        label: cfg.run.label.clone(),
        runs,
        failures,
        aggregate: agg,
        aggregate_path,
    })
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub label: String,
    pub alpha0: f64,
    pub schedule: ScheduleKind,
    pub final_mean: f64,
    pub plateau: usize,
    pub aggregate_path: PathBuf,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    pub summary_path: PathBuf,
}

fn schedule_name(kind: ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::Constant => "constant",
        ScheduleKind::ExponentialDecay => "decay",
    }
}

/// Temperature grid: every alpha0 crossed with every schedule kind, each
/// cell a full multi-seed experiment. Writes sweep_summary.csv.
pub fn run_sweep(
    base: &ExperimentConfig,
    alphas: &[f64],
    kinds: &[ScheduleKind],
) -> Result<SweepOutcome> {
    if alphas.is_empty() || kinds.is_empty() {
        return Err(Error::Config("sweep grid must be nonempty".into()));
    }
    let mut entries = Vec::new();
    for &alpha0 in alphas {
        for &kind in kinds {
            let mut cfg = base.clone();
            cfg.schedule.alpha0 = alpha0;
            cfg.schedule.kind = match kind {
                ScheduleKind::Constant => "constant".into(),
                ScheduleKind::ExponentialDecay => "exponential".into(),
            };
            cfg.run.label = format!(
                "{}_a{}_{}",
                base.run.label,
                alpha0,
                schedule_name(kind)
            );
            let outcome = run_experiment(&cfg)?;
            let curve = outcome.return_curve();
            entries.push(SweepEntry {
                label: cfg.run.label,
                alpha0,
                schedule: kind,
                final_mean: final_mean(&curve),
                plateau: plateau_iteration(&curve),
                aggregate_path: outcome.aggregate_path,
            });
        }
    }
    let summary_path = base.run.output_dir.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record(["label", "alpha0", "schedule", "final_mean", "plateau_iteration"])?;
    for e in &entries {
        w.write_record([
            e.label.clone(),
            e.alpha0.to_string(),
            schedule_name(e.schedule).to_string(),
            e.final_mean.to_string(),
            e.plateau.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(SweepOutcome {
        entries,
        summary_path,
    })
}

/// Debug dump: replays the greedy policy of a trained net for `steps`
/// steps, one transition per line as `t, s, a, r, s', done`.
pub fn dump_greedy_trajectory<E: Env>(
    env: &mut E,
    policy: &earl_learn::model::Net,
    steps: usize,
    out: &mut dyn IoWrite,
) -> Result<()> {
    let dim = env.obs_dim();
    let mut buf = vec![0.0; dim];
    env.reset();
    for t in 0..steps {
        let s = env.obs_id();
        env.encode_obs(s, &mut buf);
        let logits = policy.forward(s, &buf);
        let a = logits
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let step = env.step(a).map_err(Error::Core)?;
        writeln!(
            out,
            "{t}, {s}, {a}, {r}, {s2}, {done}",
            r = step.reward,
            s2 = step.obs_id,
            done = step.done
        )?;
        if step.done || step.truncated {
            env.reset();
        }
    }
    Ok(())
}

/// Trains the first seed of the config and dumps its greedy rollout.
pub fn train_and_dump(cfg: &ExperimentConfig, steps: usize, path: &Path) -> Result<()> {
    cfg.validate()?;
    let seed = cfg.run.seeds[0];
    let schedule = cfg.build_schedule()?;
    let mut env = cfg.build_env(seed)?;
    let policy = match cfg.learner_kind()? {
        LearnerKind::Ppo => ppo::train(&mut env, &cfg.ppo_config()?, &schedule, seed)?.policy,
        LearnerKind::Sac => {
            sac::sac_train(&mut env, &cfg.sac_config()?, &schedule, seed)?
                .nets
                .policy
        }
    };
    let mut file = fs::File::create(path)?;
    let mut env = cfg.build_env(seed)?;
    dump_greedy_trajectory(&mut env, &policy, steps, &mut file)
}
