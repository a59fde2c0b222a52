//! Ablation sweep over the eight flag cells and a seed list.
//!
//! Every (cell, seed) pair trains in its own directory and leaves a
//! `result.json`; the report is aggregated afterwards from those files only,
//! so a failed or missing cell shows up as a recorded failure rather than
//! aborting the sweep.

use super::commands::{collect_latents, load_dataset_for, write_json, write_text, CHECKPOINT_DIR, CURVES_FILE};
use super::config::RunConfig;
use crate::error::{PhriError, Result};
use crate::metrics::silhouette;
use crate::model::{evaluate, save_model, train, write_curves_csv, Flags, ModelConfig, MseSummary};
use crate::sim::{prepare_output_dir, Dataset, Split};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

pub const CELLS_DIR: &str = "cells";
pub const RESULT_FILE: &str = "result.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";
pub const CELL_RESULTS_CSV: &str = "cells.csv";

/// Outcome of one trained cell on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: String,
    pub seed: u64,
    pub epochs_trained: usize,
    pub action_mse: Option<f64>,
    pub obs_mse: Option<f64>,
    /// `None` when the silhouette is undefined or the cell failed.
    pub silhouette: Option<f64>,
    pub failure: Option<String>,
}

impl CellResult {
    fn failed(flags: Flags, seed: u64, msg: String) -> Self {
        CellResult {
            cell: flags.label(),
            seed,
            epochs_trained: 0,
            action_mse: None,
            obs_mse: None,
            silhouette: None,
            failure: Some(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Stats {
    fn of(v: &[f64]) -> Option<Stats> {
        (!v.is_empty()).then(|| {
            let s = MseSummary::from_values(v);
            Stats {
                mean: s.mean,
                median: s.median,
                std: s.std,
            }
        })
    }
}

/// One flag cell summarized over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    /// Seeds that produced test metrics.
    pub n_seeds: usize,
    pub n_failed: usize,
    pub action: Option<Stats>,
    pub observation: Option<Stats>,
    pub silhouette_mean: Option<f64>,
}

/// Eight rows in the fixed cell order (`+D+A+C` first, `-D-A-C` last) plus
/// every per-seed result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub cells: Vec<CellResult>,
}

impl AblationReport {
    pub fn row(&self, flags: Flags) -> Option<&AblationRow> {
        let label = flags.label();
        self.rows.iter().find(|r| r.cell == label)
    }

    pub fn result(&self, flags: Flags, seed: u64) -> Option<&CellResult> {
        let label = flags.label();
        self.cells.iter().find(|c| c.cell == label && c.seed == seed)
    }
}

pub fn cell_dir(out: &Path, flags: Flags, seed: u64) -> PathBuf {
    out.join(CELLS_DIR).join(flags.slug()).join(format!("seed-{seed}"))
}

fn run_cell(ds: &Dataset, base: &ModelConfig, flags: Flags, seed: u64, dir: &Path, keep: bool) -> CellResult {
    match try_run_cell(ds, base, flags, seed, dir, keep) {
        Ok(r) => r,
        Err(e) => {
            log::error!("cell {flags} seed {seed} failed: {e}");
            CellResult::failed(flags, seed, e.to_string())
        }
    }
}

fn try_run_cell(ds: &Dataset, base: &ModelConfig, flags: Flags, seed: u64, dir: &Path, keep: bool) -> Result<CellResult> {
    std::fs::create_dir_all(dir).map_err(|e| PhriError::io(dir, e))?;
    let mut cfg = base.with_flags(flags);
    cfg.seed = seed;
    let started = std::time::Instant::now();
    let outcome = train(ds, &cfg)?;
    let epochs = outcome.curves.len();
    write_curves_csv(&dir.join(CURVES_FILE), &outcome.curves)?;
    if keep {
        save_model(&dir.join(CHECKPOINT_DIR), &outcome.model, Some(&outcome.optimizer), epochs)?;
    }
    let test = ds.split(Split::Test);
    let eval = evaluate(&outcome.model, &test)?;
    let lat = collect_latents(&outcome.model, &test)?;
    let sil = silhouette(&lat.points, &lat.labels);
    log::info!(
        "cell {flags} seed {seed}: action {:.4} obs {:.4} silhouette {} ({:.1}s)",
        eval.action.mean,
        eval.observation.mean,
        sil.map_or("n/a".to_string(), |s| format!("{s:.3}")),
        started.elapsed().as_secs_f64()
    );
    Ok(CellResult {
        cell: flags.label(),
        seed,
        epochs_trained: epochs,
        action_mse: Some(eval.action.mean),
        obs_mse: Some(eval.observation.mean),
        silhouette: sil,
        failure: outcome.failure,
    })
}

/// Trains every configured cell and seed, then aggregates and writes
/// `report.csv`, `report.md`, `report.json` and `cells.csv`.
pub fn cmd_ablate(cfg: &RunConfig, data: &Path, out: &Path, force: bool) -> Result<AblationReport> {
    cfg.validate()?;
    let ds = load_dataset_for(data, &cfg.model)?;
    if ds.split(Split::Test).is_empty() {
        return Err(PhriError::param("ablation needs a non-empty test split"));
    }
    prepare_output_dir(out, force)?;
    cfg.freeze(out)?;
    let flags = cfg.ablation.flags()?;
    let work: Vec<(Flags, u64)> = flags
        .iter()
        .flat_map(|&f| cfg.ablation.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(f, seed)) = work.get(i) else { break };
        let dir = cell_dir(out, f, seed);
        let result = run_cell(&ds, &cfg.model, f, seed, &dir, cfg.ablation.save_checkpoints);
        if let Err(e) = write_json(&dir.join(RESULT_FILE), &result) {
            log::error!("cannot record cell {f} seed {seed}: {e}");
        }
    };
    let jobs = cfg.ablation.jobs.min(work.len()).max(1);
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let report = aggregate(out, &flags, &cfg.ablation.seeds)?;
    write_report(out, &report)?;
    Ok(report)
}

/// Reads the per-cell results under `out`; absent or unreadable files become
/// failed cells.
pub fn aggregate(out: &Path, flags: &[Flags], seeds: &[u64]) -> Result<AblationReport> {
    let mut cells = Vec::with_capacity(flags.len() * seeds.len());
    for &f in flags {
        for &seed in seeds {
            let path = cell_dir(out, f, seed).join(RESULT_FILE);
            let r = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str::<CellResult>(&t).map_err(|e| e.to_string()));
            cells.push(r.unwrap_or_else(|e| CellResult::failed(f, seed, format!("no result: {e}"))));
        }
    }
    let rows = Flags::all()
        .iter()
        .map(|f| {
            let label = f.label();
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.cell == label).collect();
            let act: Vec<f64> = mine.iter().filter_map(|c| c.action_mse).collect();
            let obs: Vec<f64> = mine.iter().filter_map(|c| c.obs_mse).collect();
            let sil: Vec<f64> = mine.iter().filter_map(|c| c.silhouette).collect();
            AblationRow {
                cell: label,
                n_seeds: obs.len(),
                n_failed: mine.iter().filter(|c| c.failure.is_some()).count(),
                action: Stats::of(&act),
                observation: Stats::of(&obs),
                silhouette_mean: Stats::of(&sil).map(|s| s.mean),
            }
        })
        .collect();
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        rows,
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

pub fn report_csv(report: &AblationReport) -> String {
    let mut s = String::from(
        "cell,n_seeds,n_failed,action_mean,action_median,action_std,obs_mean,obs_median,obs_std,silhouette_mean\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.cell,
            r.n_seeds,
            r.n_failed,
            opt(r.action.map(|x| x.mean)),
            opt(r.action.map(|x| x.median)),
            opt(r.action.map(|x| x.std)),
            opt(r.observation.map(|x| x.mean)),
            opt(r.observation.map(|x| x.median)),
            opt(r.observation.map(|x| x.std)),
            opt(r.silhouette_mean),
        );
    }
    s
}

fn cells_csv(report: &AblationReport) -> String {
    let mut s = String::from("cell,seed,epochs_trained,action_mse,obs_mse,silhouette,failure\n");
    for c in &report.cells {
        let failure = c.failure.as_deref().unwrap_or("").replace([',', '\n'], " ");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.cell,
            c.seed,
            c.epochs_trained,
            opt(c.action_mse),
            opt(c.obs_mse),
            opt(c.silhouette),
            failure
        );
    }
    s
}

fn report_markdown(report: &AblationReport) -> String {
    let best = |get: fn(&AblationRow) -> Option<f64>| {
        report
            .rows
            .iter()
            .filter_map(get)
            .fold(f64::INFINITY, f64::min)
    };
    let best_act = best(|r| r.action.map(|s| s.mean));
    let best_obs = best(|r| r.observation.map(|s| s.mean));
    let cell = |v: Option<Stats>, best: f64| match v {
        None => "n/a | n/a | n/a".to_string(),
        Some(s) if s.mean == best => format!("**{:.6}** | {:.6} | {:.6}", s.mean, s.median, s.std),
        Some(s) => format!("{:.6} | {:.6} | {:.6}", s.mean, s.median, s.std),
    };
    let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
    let mut s = String::from("# Ablation report\n\n");
    let _ = writeln!(s, "Test-split one-step MSE in standardized units over seeds {}.", seeds.join(", "));
    s.push_str("Bold marks the lowest mean per metric.\n\n");
    s.push_str("| cell | seeds | action mean | action median | action std | obs mean | obs median | obs std | silhouette |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            r.cell,
            r.n_seeds,
            cell(r.action, best_act),
            cell(r.observation, best_obs),
            r.silhouette_mean.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    let failures: Vec<&CellResult> = report.cells.iter().filter(|c| c.failure.is_some()).collect();
    if !failures.is_empty() {
        s.push_str("\n## Failures\n\n");
        for c in failures {
            let _ = writeln!(s, "- {} seed {}: {}", c.cell, c.seed, c.failure.as_deref().unwrap_or(""));
        }
    }
    s
}

pub fn write_report(out: &Path, report: &AblationReport) -> Result<()> {
    write_text(&out.join(REPORT_CSV), &report_csv(report))?;
    write_text(&out.join(CELL_RESULTS_CSV), &cells_csv(report))?;
    write_text(&out.join(REPORT_MD), &report_markdown(report))?;
    write_json(&out.join(REPORT_JSON), report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(flags: Flags, seed: u64, act: f64, obs: f64) -> CellResult {
        CellResult {
            cell: flags.label(),
            seed,
            epochs_trained: 1,
            action_mse: Some(act),
            obs_mse: Some(obs),
            silhouette: Some(0.1),
            failure: None,
        }
    }

    #[test]
    fn aggregate_always_has_eight_rows_and_records_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let f = Flags::FULL;
        for (seed, act) in [(0u64, 1.0), (1, 3.0)] {
            let d = cell_dir(dir.path(), f, seed);
            std::fs::create_dir_all(&d).unwrap();
            write_json(&d.join(RESULT_FILE), &result(f, seed, act, 2.0 * act)).unwrap();
        }
        let rep = aggregate(dir.path(), &[f, Flags::CONVENTIONAL], &[0, 1]).unwrap();
        assert_eq!(rep.rows.len(), 8);
        let full = rep.row(f).unwrap();
        assert_eq!(full.n_seeds, 2);
        assert_eq!(full.action.unwrap().mean, 2.0);
        assert_eq!(full.observation.unwrap().std, 2.0);
        let conv = rep.row(Flags::CONVENTIONAL).unwrap();
        assert_eq!((conv.n_seeds, conv.n_failed), (0, 2));
        assert!(conv.action.is_none());
        let csv = report_csv(&rep);
        assert_eq!(csv.lines().count(), 9);
        assert!(report_markdown(&rep).contains("## Failures"));
    }

    #[test]
    fn result_json_round_trips_with_missing_values() {
        let r = CellResult::failed(Flags::FULL, 3, "boom".into());
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<CellResult>(&text).unwrap(), r);
    }
}
