//! The `run`, `annotate`, `score` and `report` sub-commands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use lanebench_bridge::HttpPolicy;
use lanebench_core::dataset::{read_state, state_files, FrameRecord, ObjectBox, Store};
use lanebench_core::episode::{run_all, EpisodeRecord, EpisodeRunner, RunConfig, RunError, RunSummary, SUMMARY_COLUMNS};
use lanebench_core::expert::{DriveCommenter, ExpertConfig};
use lanebench_core::policy::{builtin_policy, Policy, PolicyError};
use lanebench_core::vqa::{aggregate, DeterministicJudge, ScoreBreakdown, ScoreWeights, Scorer, TABLE_COLUMNS};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(runtime)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    w.write_record(header).map_err(runtime)?;
    for r in rows {
        w.write_record(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    lanebench_core::dataset::write_atomic(path, &lanebench_core::dataset::to_json_bytes(value)).map_err(runtime)
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Built-in policy name, or an `http(s)://` endpoint.
pub fn make_policy(cfg: &RunConfig) -> Result<Box<dyn Policy + Send>, CliError> {
    if cfg.policy.starts_with("http://") || cfg.policy.starts_with("https://") {
        let mut p = HttpPolicy::new(&cfg.policy, Duration::from_secs(cfg.timeout_secs)).map_err(runtime)?;
        if let Err(e) = p.probe() {
            log::warn!("{}: health probe failed: {e}", cfg.policy);
        }
        return Ok(Box::new(p));
    }
    builtin_policy(&cfg.policy, cfg.seed).map_err(|e| match e {
        PolicyError::Unknown(_) => CliError::Config(e.to_string()),
        other => CliError::Config(format!("policy {}: {other}", cfg.policy)),
    })
}

#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<EpisodeRecord>,
    pub summary: RunSummary,
}

fn summary_rows(records: &[EpisodeRecord], summary: &RunSummary) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                m.scenario.clone(),
                fmt2(m.driving_score),
                fmt2(if m.success { 100.0 } else { 0.0 }),
                fmt2(m.efficiency),
                fmt2(m.comfort),
            ]
        })
        .collect();
    let mut all = vec!["all".to_string()];
    all.extend(summary.values().iter().map(|v| fmt2(*v)));
    rows.push(all);
    rows
}

fn planning_header() -> Vec<String> {
    std::iter::once("scenario").chain(SUMMARY_COLUMNS).map(String::from).collect()
}

/// Runs every configured scenario into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let runner = EpisodeRunner::new(cfg.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut policy = make_policy(cfg)?;
    let store = Store::new(&cfg.output_dir);
    let (records, summary) = run_all(&runner, &mut policy, &store).map_err(|e| match e {
        RunError::Config(_) | RunError::Chain(_) | RunError::Scenario { .. } => CliError::Config(e.to_string()),
        other => runtime(other),
    })?;
    write_csv(&cfg.output_dir.join("summary.csv"), &planning_header(), &summary_rows(&records, &summary))?;
    Ok(RunOutcome { records, summary })
}

#[derive(Debug, Default)]
pub struct AnnotateReport {
    pub frames: usize,
    pub warnings: Vec<String>,
}

/// Annotates every world snapshot under `states` into the dataset at `out`.
/// Existing frames keep their policy answers, images and review status.
pub fn annotate(states: &Path, out: &Path, qids: &[u32], expert: &ExpertConfig) -> Result<AnnotateReport, CliError> {
    if !states.is_dir() {
        return Err(runtime(format!("{} is not a directory", states.display())));
    }
    let commenter = DriveCommenter::new(expert.clone());
    let store = Store::new(out);
    let mut report = AnnotateReport::default();
    for (frame, path) in state_files(states)? {
        let world = match read_state(&path) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("skipping frame {frame}: {e}");
                report.warnings.push(format!("frame {frame}: {e}"));
                continue;
            }
        };
        let qas = commenter.annotate_frame(&world, qids).map_err(runtime)?;
        let scenario = world.scenario_meta.name.clone();
        let mut record = match store.read_frame(&scenario, world.frame_index) {
            Ok(existing) => existing.record,
            Err(_) => FrameRecord::new(&scenario, world.frame_index, Vec::new()),
        };
        record.qa_pairs = qas;
        record.ego = Some(ObjectBox::ego(&world));
        record.objects = ObjectBox::actors(&world);
        store.write_frame(&record)?;
        report.frames += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scenario: String,
    pub frame_index: u64,
    pub qid: u32,
    pub score: Option<ScoreBreakdown>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    /// Column name to percentage, over every scenario.
    pub overall: BTreeMap<String, f64>,
    pub per_scenario: BTreeMap<String, BTreeMap<String, f64>>,
    pub flagged: usize,
}

fn vqa_header() -> Vec<String> {
    std::iter::once("scenario").chain(TABLE_COLUMNS.iter().map(|c| c.0)).map(String::from).collect()
}

fn vqa_row(name: &str, table: &BTreeMap<String, f64>) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.extend(TABLE_COLUMNS.iter().map(|(c, _)| table.get(*c).map(|v| fmt2(*v)).unwrap_or_default()));
    row
}

/// Scores every stored policy answer against the stored expert answer.
/// Reads frames only; results go to `<run>/scores/`.
pub fn score(run_dir: &Path, weights: &ScoreWeights) -> Result<ScoreReport, CliError> {
    if !run_dir.is_dir() {
        return Err(runtime(format!("{} is not a directory", run_dir.display())));
    }
    let store = Store::new(run_dir);
    let scorer = Scorer { weights: weights.clone(), ..Default::default() };
    let mut report = ScoreReport::default();
    let mut all = Vec::new();
    for scenario in store.scenarios()? {
        let mut scored = Vec::new();
        for f in store.frames(&scenario)? {
            let stored = match store.read_frame(&scenario, f) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("skipping {scenario} frame {f}: {e}");
                    continue;
                }
            };
            if stored.excluded {
                continue;
            }
            let rec = stored.record;
            for (qid, answer) in &rec.policy_answers {
                let row = match rec.qa(*qid) {
                    Some(qa) => {
                        let s = scorer.score(qa, answer, &DeterministicJudge);
                        scored.push(s.clone());
                        ScoreRow { scenario: scenario.clone(), frame_index: f, qid: *qid, flags: s.flags.clone(), score: Some(s) }
                    }
                    None => {
                        report.flagged += 1;
                        ScoreRow { scenario: scenario.clone(), frame_index: f, qid: *qid, score: None, flags: vec!["missing-gt".into()] }
                    }
                };
                report.rows.push(row);
            }
        }
        report.per_scenario.insert(scenario, aggregate(&scored));
        all.extend(scored);
    }
    report.overall = aggregate(&all);

    let out = run_dir.join("scores");
    let header: Vec<String> = ["scenario", "frame", "qid", "final_score", "f1", "precision", "recall", "ndcg", "object_agg", "speed_penalty", "flags"]
        .map(String::from)
        .to_vec();
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let s = r.score.clone().unwrap_or_default();
            vec![
                r.scenario.clone(),
                r.frame_index.to_string(),
                r.qid.to_string(),
                if r.score.is_some() { format!("{:.6}", s.final_score) } else { String::new() },
                opt(s.f1),
                opt(s.precision),
                opt(s.recall),
                opt(s.ndcg),
                opt(s.object_agg),
                opt(s.speed_penalty),
                r.flags.join(";"),
            ]
        })
        .collect();
    write_csv(&out.join("rows.csv"), &header, &rows)?;
    let mut table: Vec<Vec<String>> = report.per_scenario.iter().map(|(n, t)| vqa_row(n, t)).collect();
    table.push(vqa_row("all", &report.overall));
    write_csv(&out.join("vqa_table.csv"), &vqa_header(), &table)?;
    write_json(&out.join("vqa_table.json"), &serde_json::json!({"overall": report.overall, "per_scenario": report.per_scenario}))?;
    if all.is_empty() {
        return Err(CliError::Empty(format!("no scorable answers under {}", run_dir.display())));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningReport {
    pub summary: RunSummary,
    pub episodes: Vec<EpisodeRecord>,
    pub vqa: Option<serde_json::Value>,
}

impl PlanningReport {
    /// Plain-text tables for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let header = planning_header();
        s.push_str(&header.join(" | "));
        s.push('\n');
        for row in summary_rows(&self.episodes, &self.summary) {
            s.push_str(&row.join(" | "));
            s.push('\n');
        }
        if let Some(v) = self.vqa.as_ref().and_then(|v| v.get("overall")) {
            s.push('\n');
            s.push_str(&TABLE_COLUMNS.map(|c| c.0).join(" | "));
            s.push('\n');
            let cells: Vec<String> =
                TABLE_COLUMNS.iter().map(|(c, _)| v.get(*c).and_then(|x| x.as_f64()).map(fmt2).unwrap_or("-".into())).collect();
            s.push_str(&cells.join(" | "));
            s.push('\n');
        }
        s
    }
}

/// Planning table from every `episode.json`, written to `<run>/report/`.
pub fn report(run_dir: &Path) -> Result<PlanningReport, CliError> {
    if !run_dir.is_dir() {
        return Err(runtime(format!("{} is not a directory", run_dir.display())));
    }
    let store = Store::new(run_dir);
    let mut episodes = Vec::new();
    for scenario in store.scenarios()? {
        let Ok(doc) = store.read_doc(&scenario, "episode.json") else { continue };
        match serde_json::from_value::<EpisodeRecord>(doc) {
            Ok(r) => episodes.push(r),
            Err(e) => log::warn!("{scenario}/episode.json: {e}"),
        }
    }
    if episodes.is_empty() {
        return Err(CliError::Empty(format!("no episodes under {}", run_dir.display())));
    }
    let policy = episodes[0].policy.clone();
    let summary = RunSummary::from_records(&policy, &episodes);
    let vqa_path = run_dir.join("scores").join("vqa_table.json");
    let vqa = std::fs::read(&vqa_path).ok().and_then(|b| serde_json::from_slice(&b).ok());
    let out = run_dir.join("report");
    write_csv(&out.join("planning.csv"), &planning_header(), &summary_rows(&episodes, &summary))?;
    let rep = PlanningReport { summary, episodes, vqa };
    write_json(&out.join("planning.json"), &serde_json::json!({"summary": rep.summary, "vqa": rep.vqa}))?;
    Ok(rep)
}

