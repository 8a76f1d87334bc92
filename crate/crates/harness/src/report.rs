//! Report emission: CSV and JSON at full precision, aligned text tables at
//! one decimal, and one trajectory log per episode run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use multion_core::agents::AgentKind;
use multion_core::env::format_log_line;
use multion_core::metrics::{aggregate, EpisodeMetrics, Summary};
use multion_core::reward::exact_sum;
use multion_core::scene::CategoryCatalog;
use serde_json::{json, Value};

use crate::dataset::{EpisodeDataset, LoadedScenes};
use crate::error::{HarnessError, Result};
use crate::runner::{AblationRow, Outcome, PairedRun};

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Dataset(e.to_string()))?;
    write(path, &(text + "\n"))
}

/// Left-aligned first column, right-aligned numbers.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> =
            cells.zip(&widths).enumerate().map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") }).collect();
        writeln!(s, "{}", parts.join("  ").trim_end()).expect("write to string");
    };
    line(&mut s, &mut headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    writeln!(s, "{}", rule.join("  ")).expect("write to string");
    for row in rows {
        line(&mut s, &mut row.iter().map(String::as_str));
    }
    s
}

fn opt1(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.1}"))
}

fn opt_full(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn labels(catalog: &CategoryCatalog, cats: &[usize]) -> String {
    cats.iter().map(|&c| catalog.token(c)).collect::<Vec<_>>().join(" ")
}

/// `# key value` header lines followed by one line per executed step.
pub fn trajectory_log(o: &Outcome, ds: &EpisodeDataset, scenes: &LoadedScenes) -> String {
    let scene = scenes.fields[o.scene].scene();
    let catalog = scene.catalog();
    let entry = &ds.episodes[o.index];
    let mut s = String::new();
    writeln!(s, "# episode {}", o.id).expect("write to string");
    writeln!(s, "# agent {}", o.agent).expect("write to string");
    writeln!(s, "# scene {}", ds.scenes[o.scene].name).expect("write to string");
    writeln!(s, "# targets {}", labels(catalog, &entry.targets)).expect("write to string");
    if let Some(seq) = &o.sequence {
        writeln!(s, "# sequence {}", labels(catalog, seq)).expect("write to string");
    }
    let start = entry.start;
    writeln!(s, "# start {} {} {}", start.0, start.1, entry.heading).expect("write to string");
    for step in &o.record.steps {
        writeln!(s, "{}", format_log_line(step.t, step.action, &step.pose, step.collided, &step.found, catalog, step.reward)).expect("write to string");
    }
    writeln!(s, "# found {}", labels(catalog, &o.found_order())).expect("write to string");
    s
}

pub fn write_trajectories(dir: &Path, outcomes: &[Outcome], ds: &EpisodeDataset, scenes: &LoadedScenes) -> Result<()> {
    for o in outcomes {
        write(&dir.join("trajectories").join(o.agent.as_str()).join(format!("{}.log", o.id)), &trajectory_log(o, ds, scenes))?;
    }
    Ok(())
}

const EPISODE_HEADER: &str = "agent,episode,scene,k,success,sub_success,timesteps,path_length,g,gspl,found_order";

fn episode_csv_row(o: &Outcome, ds: &EpisodeDataset, scenes: &LoadedScenes) -> String {
    let m = &o.metrics;
    let catalog = scenes.fields[o.scene].scene().catalog();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        o.agent,
        o.id,
        ds.scenes[o.scene].name,
        o.k,
        m.success as u8,
        m.sub_success,
        m.timesteps,
        m.path_length,
        m.g,
        m.gspl,
        labels(catalog, &o.found_order())
    )
}

/// Summaries per agent over all episodes (`k = None`) and per k.
pub fn summaries(outcomes: &[Outcome]) -> Result<Vec<(AgentKind, Option<usize>, Summary)>> {
    let mut by: BTreeMap<(AgentKind, Option<usize>), Vec<EpisodeMetrics>> = BTreeMap::new();
    for o in outcomes {
        by.entry((o.agent, None)).or_default().push(o.metrics);
        by.entry((o.agent, Some(o.k))).or_default().push(o.metrics);
    }
    by.into_iter().map(|((a, k), m)| Ok((a, k, aggregate(&m)?))).collect()
}

fn summary_json(agent: AgentKind, k: Option<usize>, s: &Summary) -> Value {
    json!({
        "agent": agent.as_str(),
        "k": k,
        "episodes": s.episodes,
        "successes": s.successes,
        "success_pct": s.success_pct,
        "sub_success_pct": s.sub_success_pct,
        "gspl_pct": s.gspl_pct,
        "mean_timesteps": s.mean_timesteps,
        "mean_path_length": s.mean_path_length,
    })
}

fn k_label(k: Option<usize>) -> String {
    k.map_or("all".into(), |k| k.to_string())
}

pub fn eval_table(rows: &[(AgentKind, Option<usize>, Summary)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(a, k, s)| {
            vec![
                a.to_string(),
                k_label(*k),
                s.episodes.to_string(),
                format!("{:.1}", s.success_pct),
                format!("{:.1}", s.sub_success_pct),
                format!("{:.1}", s.gspl_pct),
                opt1(s.mean_timesteps),
                opt1(s.mean_path_length),
            ]
        })
        .collect();
    table(&["agent", "k", "episodes", "success %", "sub-success %", "G-SPL %", "timesteps", "path (m)"], &body)
}

/// Writes `report.csv`, `report.json`, `summary.txt` and the trajectory logs.
pub fn write_eval(dir: &Path, outcomes: &[Outcome], ds: &EpisodeDataset, scenes: &LoadedScenes, seed: u64) -> Result<String> {
    let mut csv = String::from(EPISODE_HEADER);
    csv.push('\n');
    for o in outcomes {
        csv.push_str(&episode_csv_row(o, ds, scenes));
        csv.push('\n');
    }
    write(&dir.join("report.csv"), &csv)?;
    let sums = summaries(outcomes)?;
    let episodes: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "agent": o.agent.as_str(),
                "episode": o.id,
                "k": o.k,
                "metrics": o.metrics,
                "found_order": o.found_order(),
                "sequence": o.sequence,
                "total_reward": o.record.total_reward(),
            })
        })
        .collect();
    let report = json!({
        "command": "eval",
        "seed": seed,
        "dataset_seed": ds.provenance.master_seed,
        "summaries": sums.iter().map(|(a, k, s)| summary_json(*a, *k, s)).collect::<Vec<_>>(),
        "episodes": episodes,
    });
    write_json(&dir.join("report.json"), &report)?;
    let text = eval_table(&sums);
    write(&dir.join("summary.txt"), &text)?;
    write_trajectories(dir, outcomes, ds, scenes)?;
    Ok(text)
}

/// Per-scene means: SAM over all pairs, PSM over pairs where it also succeeded.
struct SceneRow {
    label: String,
    pairs: usize,
    psm_failures: usize,
    sam_t: Option<f64>,
    psm_t: Option<f64>,
    sam_p: Option<f64>,
    psm_p: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| exact_sum(v) / v.len() as f64)
}

fn scene_row(label: String, pairs: &[&crate::runner::Pair]) -> SceneRow {
    let ok: Vec<_> = pairs.iter().filter(|p| p.psm.metrics.success).collect();
    SceneRow {
        label,
        pairs: pairs.len(),
        psm_failures: pairs.len() - ok.len(),
        sam_t: mean(&pairs.iter().map(|p| p.sam.metrics.timesteps as f64).collect::<Vec<_>>()),
        psm_t: mean(&ok.iter().map(|p| p.psm.metrics.timesteps as f64).collect::<Vec<_>>()),
        sam_p: mean(&pairs.iter().map(|p| p.sam.metrics.path_length).collect::<Vec<_>>()),
        psm_p: mean(&ok.iter().map(|p| p.psm.metrics.path_length).collect::<Vec<_>>()),
    }
}

pub fn write_paired(dir: &Path, run: &PairedRun, ds: &EpisodeDataset, scenes: &LoadedScenes, seed: u64) -> Result<String> {
    let mut by_scene: BTreeMap<usize, Vec<&crate::runner::Pair>> = BTreeMap::new();
    for p in &run.pairs {
        by_scene.entry(p.sam.scene).or_default().push(p);
    }
    let mut rows: Vec<SceneRow> = by_scene.iter().map(|(&s, ps)| scene_row(ds.scenes[s].name.clone(), ps)).collect();
    rows.push(scene_row("all".into(), &run.pairs.iter().collect::<Vec<_>>()));

    let mut csv = String::from("scene,pairs,psm_failures,sam_timesteps,psm_timesteps,sam_path_length,psm_path_length\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{},{},{}", r.label, r.pairs, r.psm_failures, opt_full(r.sam_t), opt_full(r.psm_t), opt_full(r.sam_p), opt_full(r.psm_p))
            .expect("write to string");
    }
    write(&dir.join("report.csv"), &csv)?;

    let mut pairs_csv = String::from("episode,scene,sam_timesteps,sam_path_length,psm_timesteps,psm_path_length,psm_success,g,sequence\n");
    for p in &run.pairs {
        let catalog = scenes.fields[p.sam.scene].scene().catalog();
        writeln!(
            pairs_csv,
            "{},{},{},{},{},{},{},{},{}",
            p.sam.id,
            ds.scenes[p.sam.scene].name,
            p.sam.metrics.timesteps,
            p.sam.metrics.path_length,
            p.psm.metrics.timesteps,
            p.psm.metrics.path_length,
            p.psm.metrics.success as u8,
            p.sam.metrics.g,
            labels(catalog, p.psm.sequence.as_deref().unwrap_or(&[]))
        )
        .expect("write to string");
    }
    write(&dir.join("pairs.csv"), &pairs_csv)?;

    let report = json!({
        "command": "paired",
        "seed": seed,
        "sam_agent": run.sam_kind.as_str(),
        "psm_agent": run.psm_kind.as_str(),
        "psm_sequence": format!("{:?}", run.mode).to_lowercase(),
        "excluded": run.excluded,
        "scenes": rows.iter().map(|r| json!({
            "scene": r.label,
            "pairs": r.pairs,
            "psm_failures": r.psm_failures,
            "sam_timesteps": r.sam_t,
            "psm_timesteps": r.psm_t,
            "sam_path_length": r.sam_p,
            "psm_path_length": r.psm_p,
        })).collect::<Vec<_>>(),
    });
    write_json(&dir.join("report.json"), &report)?;
    let outcomes: Vec<Outcome> = run.pairs.iter().flat_map(|p| [p.sam.clone(), p.psm.clone()]).collect();
    write_trajectories(dir, &outcomes, ds, scenes)?;

    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.label.clone(), r.pairs.to_string(), opt1(r.psm_t), opt1(r.sam_t), format!("{:.2}", r.psm_p.unwrap_or(f64::NAN)), format!("{:.2}", r.sam_p.unwrap_or(f64::NAN))])
        .collect();
    let mut text = table(&["scene", "pairs", "PSM steps", "SAM steps", "PSM path (m)", "SAM path (m)"], &body);
    writeln!(text, "excluded (SAM failed): {}", run.excluded.len()).expect("write to string");
    write(&dir.join("summary.txt"), &text)?;
    Ok(text)
}

pub fn write_ablation(dir: &Path, rows: &[AblationRow], seed: u64) -> Result<String> {
    let mut csv = String::from("agent,k,budget,episodes,success_pct,sub_success_pct\n");
    for r in rows {
        writeln!(csv, "{},{},{},{},{},{}", r.agent, r.k, r.budget, r.episodes, r.success_pct, r.sub_success_pct).expect("write to string");
    }
    write(&dir.join("report.csv"), &csv)?;
    let report = json!({
        "command": "ablate",
        "seed": seed,
        "rows": rows.iter().map(|r| json!({
            "agent": r.agent.as_str(),
            "k": r.k,
            "budget": r.budget,
            "episodes": r.episodes,
            "success_pct": r.success_pct,
            "sub_success_pct": r.sub_success_pct,
        })).collect::<Vec<_>>(),
    });
    write_json(&dir.join("report.json"), &report)?;
    // largest budget first within each agent and k
    let mut sorted: Vec<&AblationRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (a.agent, a.k, std::cmp::Reverse(a.budget)).cmp(&(b.agent, b.k, std::cmp::Reverse(b.budget))));
    let body: Vec<Vec<String>> = sorted
        .iter()
        .map(|r| vec![r.agent.to_string(), r.k.to_string(), r.budget.to_string(), format!("{:.1}", r.success_pct), format!("{:.1}", r.sub_success_pct)])
        .collect();
    let text = table(&["agent", "k", "timesteps", "success %", "sub-success %"], &body);
    write(&dir.join("summary.txt"), &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "num"], &[vec!["long".into(), "1.5".into()], vec!["x".into(), "10.25".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a       num");
        assert_eq!(lines[2], "long    1.5");
        assert_eq!(lines[3], "x     10.25");
    }
}
