//! Aggregates run logs across seeds and draws learning curves.
//!
//! `aggregate.csv` is the source of truth; the SVGs are drawn from it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::harness::RUNLOG_FILE;
use crate::runlog::{RowStatus, RunLog};
use crate::{HarnessError, Result};

/// Completed rows of one run log.
#[derive(Debug, Clone)]
pub struct RunCurve {
    pub path: PathBuf,
    pub env_steps: Vec<usize>,
    pub reward: Vec<f64>,
    /// Mean |action| averaged over agents.
    pub abs_action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub group: String,
    pub iteration: usize,
    pub env_steps: usize,
    pub n_runs: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub abs_action_mean: f64,
    pub abs_action_std: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PlotOutput {
    pub rows: Vec<AggregateRow>,
    pub warnings: Vec<String>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn read_curve(path: &Path) -> Result<RunCurve> {
    let (_, rows) = RunLog::read(path)?;
    let ok: Vec<_> = rows.into_iter().take_while(|r| r.status == RowStatus::Ok).collect();
    Ok(RunCurve {
        path: path.to_path_buf(),
        env_steps: ok.iter().map(|r| r.stats.env_steps).collect(),
        reward: ok.iter().map(|r| r.stats.mean_episode_reward).collect(),
        abs_action: ok
            .iter()
            .map(|r| {
                let a = &r.stats.mean_abs_action;
                a.iter().sum::<f64>() / a.len().max(1) as f64
            })
            .collect(),
    })
}

fn find_logs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let log = dir.join(RUNLOG_FILE);
    if log.is_file() {
        out.push(log);
        return Ok(());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        find_logs(&c, out)?;
    }
    Ok(())
}

/// Run logs under the given directories, grouped by the name of each run
/// directory's parent (one group per method configuration).
pub fn collect_groups(dirs: &[PathBuf]) -> Result<BTreeMap<String, Vec<RunCurve>>> {
    let mut logs = Vec::new();
    for d in dirs {
        find_logs(d, &mut logs)?;
    }
    if logs.is_empty() {
        return Err(HarnessError::Plot(format!("no {RUNLOG_FILE} found under {dirs:?}")));
    }
    let mut groups: BTreeMap<String, Vec<RunCurve>> = BTreeMap::new();
    for log in logs {
        let group = log
            .parent()
            .and_then(Path::parent)
            .and_then(Path::file_name)
            .map_or_else(|| "runs".to_string(), |n| n.to_string_lossy().into_owned());
        groups.entry(group).or_default().push(read_curve(&log)?);
    }
    Ok(groups)
}

/// Per-iteration mean and std across the runs of each group, truncated to
/// the shortest run.
pub fn aggregate(groups: &BTreeMap<String, Vec<RunCurve>>) -> PlotOutput {
    let mut out = PlotOutput::default();
    for (group, runs) in groups {
        let len = runs.iter().map(|r| r.reward.len()).min().unwrap_or(0);
        if runs.iter().any(|r| r.reward.len() != len) {
            out.warnings.push(format!(
                "{group}: runs have different lengths {:?}; truncating to {len} iterations",
                runs.iter().map(|r| r.reward.len()).collect::<Vec<_>>()
            ));
        }
        for k in 0..len {
            let rewards: Vec<f64> = runs.iter().map(|r| r.reward[k]).collect();
            let actions: Vec<f64> = runs.iter().map(|r| r.abs_action[k]).collect();
            let (reward_mean, reward_std) = mean_std(&rewards);
            let (abs_action_mean, abs_action_std) = mean_std(&actions);
            out.rows.push(AggregateRow {
                group: group.clone(),
                iteration: k,
                env_steps: runs[0].env_steps[k],
                n_runs: runs.len(),
                reward_mean,
                reward_std,
                abs_action_mean,
                abs_action_std,
            });
        }
    }
    out
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let bad = |e: csv::Error| HarnessError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(bad)?;
    w.write_record([
        "group",
        "iteration",
        "env_steps",
        "n_runs",
        "reward_mean",
        "reward_std",
        "abs_action_mean",
        "abs_action_std",
    ])
    .map_err(bad)?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.iteration.to_string(),
            r.env_steps.to_string(),
            r.n_runs.to_string(),
            format!("{:.16e}", r.reward_mean),
            format!("{:.16e}", r.reward_std),
            format!("{:.16e}", r.abs_action_mean),
            format!("{:.16e}", r.abs_action_std),
        ])
        .map_err(bad)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn draw(path: &Path, title: &str, rows: &[AggregateRow], pick: fn(&AggregateRow) -> (f64, f64)) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Plot(format!("{}: {e}", path.display()));
    let mut groups: BTreeMap<&str, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.group.as_str()).or_default().push(r);
    }
    let x_max = rows.iter().map(|r| r.env_steps).max().unwrap_or(1).max(1) as f64;
    let (mut lo, mut hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let (m, s) = pick(r);
        (lo.min(m - s), hi.max(m + s))
    });
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);

    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, (lo - pad)..(hi + pad))
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("environment steps")
        .y_desc(title)
        .draw()
        .map_err(|e| err(&e))?;
    for (idx, (group, pts)) in groups.iter().enumerate() {
        let color = Palette99::pick(idx);
        let mut band: Vec<(f64, f64)> = pts
            .iter()
            .map(|r| (r.env_steps as f64, pick(r).0 + pick(r).1))
            .collect();
        band.extend(pts.iter().rev().map(|r| (r.env_steps as f64, pick(r).0 - pick(r).1)));
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
            .map_err(|e| err(&e))?;
        chart
            .draw_series(LineSeries::new(
                pts.iter().map(|r| (r.env_steps as f64, pick(r).0)),
                color.stroke_width(2),
            ))
            .map_err(|e| err(&e))?
            .label(*group)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

/// Aggregates every run log under `dirs` and writes `aggregate.csv`,
/// `reward.svg` and `actions.svg` into `out_dir`.
pub fn plot(dirs: &[PathBuf], out_dir: &Path) -> Result<PlotOutput> {
    let output = aggregate(&collect_groups(dirs)?);
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    write_aggregate(&out_dir.join("aggregate.csv"), &output.rows)?;
    draw(&out_dir.join("reward.svg"), "mean episode reward", &output.rows, |r| {
        (r.reward_mean, r.reward_std)
    })?;
    draw(&out_dir.join("actions.svg"), "mean |action|", &output.rows, |r| {
        (r.abs_action_mean, r.abs_action_std)
    })?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(reward: &[f64]) -> RunCurve {
        RunCurve {
            path: PathBuf::new(),
            env_steps: (1..=reward.len()).map(|k| k * 100).collect(),
            reward: reward.to_vec(),
            abs_action: reward.iter().map(|r| r.abs() / 10.0).collect(),
        }
    }

    #[test]
    fn single_run_has_zero_band() {
        let groups = BTreeMap::from([("g".to_string(), vec![curve(&[1.0, 2.0, 3.0])])]);
        let out = aggregate(&groups);
        assert_eq!(out.rows.len(), 3);
        assert!(out.rows.iter().all(|r| r.reward_std == 0.0 && r.abs_action_std == 0.0));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn identical_runs_reproduce_the_run() {
        let c = curve(&[-1.5, 0.25, 7.0]);
        let groups = BTreeMap::from([("g".to_string(), vec![c.clone(), c.clone()])]);
        let out = aggregate(&groups);
        for (row, r) in out.rows.iter().zip(&c.reward) {
            assert_eq!(row.reward_mean, *r);
            assert_eq!(row.reward_std, 0.0);
            assert_eq!(row.n_runs, 2);
        }
    }

    #[test]
    fn mismatched_lengths_truncate_with_a_warning() {
        let groups = BTreeMap::from([("g".to_string(), vec![curve(&[1.0, 2.0, 3.0]), curve(&[3.0, 4.0])])]);
        let out = aggregate(&groups);
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.rows[1].reward_mean, 3.0);
        assert_eq!(out.rows[1].reward_std, 1.0);
    }

    #[test]
    fn svg_output_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let groups = BTreeMap::from([
            ("a".to_string(), vec![curve(&[1.0, 2.0]), curve(&[2.0, 3.0])]),
            ("b".to_string(), vec![curve(&[0.0, 0.0])]),
        ]);
        let out = aggregate(&groups);
        let svg = dir.path().join("r.svg");
        draw(&svg, "reward", &out.rows, |r| (r.reward_mean, r.reward_std)).unwrap();
        let text = fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polygon") || text.contains("path"));
    }
}
