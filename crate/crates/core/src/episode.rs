//! The closed loop: annotate, ask the policy, actuate, step, record.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionConfig, ActionModule};
use crate::chain::{ChainConfig, ChainError, ExecutionPlan, FrameContext, RawChain};
use crate::dataset::{FrameRecord, ObjectBox, Store, StoreError};
use crate::executor::{execute_frame, ExecError, FrameInputs};
use crate::expert::{question_registry, DriveCommenter, ExpertConfig, ExpertError};
use crate::geometry::wrap_angle;
use crate::infraction::{DetectorConfig, InfractionDetector};
use crate::keys::{extract_keys, ActionKeys, DirectionKey, SpeedKey};
use crate::metrics::{report, EpisodeLog, InfractionEvent, InfractionKind, MetricReport, PenaltyConfig, Termination, TickRecord};
use crate::policy::{ImagePayload, Policy};
use crate::render::{encode_png, render_bev, render_text, BevOptions, TextFilter};
use crate::vqa::ScoreWeights;
use crate::world::{bundled_scenario, load_scenario, step, ActorKind, WorldState, BUNDLED_SCENARIO_NAMES, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    #[default]
    Bev,
    Text,
    Both,
}

impl InputMode {
    pub fn bev(&self) -> bool {
        matches!(self, InputMode::Bev | InputMode::Both)
    }
    pub fn text(&self) -> bool {
        matches!(self, InputMode::Text | InputMode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageTransport {
    /// Absolute path of the stored PNG.
    #[default]
    Path,
    Inline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled scenario names or scenario file paths.
    pub scenarios: Vec<String>,
    #[serde(rename = "CHAIN")]
    pub chain: RawChain,
    /// Built-in policy spec or an `http(s)://` endpoint.
    pub policy: String,
    pub input_mode: InputMode,
    pub image_transport: ImageTransport,
    /// Ticks between policy interventions.
    pub interval: u64,
    /// Overrides the scenario's own budget.
    pub tick_budget: Option<u64>,
    /// Question whose answer drives the vehicle.
    pub action_qid: u32,
    pub weights: ScoreWeights,
    pub penalties: PenaltyConfig,
    pub expert: ExpertConfig,
    pub action: ActionConfig,
    pub detector: DetectorConfig,
    pub bev: BevOptions,
    pub text_filter: TextFilter,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub timeout_secs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: BUNDLED_SCENARIO_NAMES.iter().map(|s| s.to_string()).collect(),
            chain: ChainConfig::default().to_raw(),
            policy: "gt-echo".into(),
            input_mode: InputMode::Bev,
            image_transport: ImageTransport::Path,
            interval: 5,
            tick_budget: None,
            action_qid: 50,
            weights: ScoreWeights::default(),
            penalties: PenaltyConfig::default(),
            expert: ExpertConfig::default(),
            action: ActionConfig::default(),
            detector: DetectorConfig::default(),
            bev: BevOptions::default(),
            text_filter: TextFilter::default(),
            output_dir: PathBuf::from("runs/latest"),
            seed: 0,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error("scenario {name}: {message}")]
    Scenario { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub frame_index: u64,
    pub extracted: ActionKeys,
    pub direction: DirectionKey,
    pub speed: SpeedKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: String,
    pub policy_calls: u64,
    pub interventions: Vec<Intervention>,
    /// Set when the policy failed and the episode stopped early.
    pub aborted: Option<String>,
    pub metrics: MetricReport,
    pub log: EpisodeLog,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Bundled name, or a path to a scenario file.
pub fn load_world(spec: &str, seed: u64) -> Result<WorldState, RunError> {
    if BUNDLED_SCENARIO_NAMES.contains(&spec) {
        return bundled_scenario(spec, seed).map_err(|e| RunError::Scenario { name: spec.into(), message: e.to_string() });
    }
    let text = std::fs::read_to_string(spec).map_err(|e| RunError::Scenario {
        name: spec.into(),
        message: format!("not a bundled scenario ({}) and unreadable: {e}", BUNDLED_SCENARIO_NAMES.join(", ")),
    })?;
    load_scenario(&text, seed).map_err(|e| RunError::Scenario { name: spec.into(), message: e.to_string() })
}

/// Speed of the nearest same-direction vehicle ahead, else the speed limit.
pub fn reference_speed(world: &WorldState) -> f64 {
    let ego = world.ego.pose;
    world
        .actors
        .iter()
        .filter(|a| a.kind == ActorKind::Vehicle)
        .filter(|a| wrap_angle(a.pose.heading - ego.heading).abs() < 30f64.to_radians())
        .filter_map(|a| {
            let (lon, lat) = ego.to_local(a.pose.position());
            (lon > 0.0 && lon < 30.0 && lat.abs() < 2.0).then_some((lon, a.speed))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or_else(|| world.effective_speed_limit(), |(_, v)| v)
}

fn tick_record(world: &WorldState) -> TickRecord {
    TickRecord {
        frame_index: world.frame_index,
        x: world.ego.pose.x,
        y: world.ego.pose.y,
        heading: world.ego.pose.heading,
        speed: world.ego.speed,
        reference_speed: reference_speed(world),
    }
}

pub struct EpisodeRunner {
    pub config: RunConfig,
    pub chain: ChainConfig,
    pub plan: ExecutionPlan,
    commenter: DriveCommenter,
}

impl EpisodeRunner {
    pub fn new(config: RunConfig) -> Result<Self, RunError> {
        if config.interval == 0 {
            return Err(RunError::Config("interval must be at least 1".into()));
        }
        let chain = ChainConfig::from_raw(&config.chain)?;
        let registered: Vec<u32> = question_registry().iter().map(|q| q.qid).collect();
        if let Some(q) = chain.nodes.iter().find(|q| !registered.contains(q)) {
            return Err(RunError::Config(format!("chain question {q} is not registered; registered: {registered:?}")));
        }
        if !chain.nodes.contains(&config.action_qid) {
            return Err(RunError::Config(format!("action question {} is not in the chain", config.action_qid)));
        }
        let plan = chain.plan();
        let commenter = DriveCommenter::new(config.expert.clone());
        Ok(Self { config, chain, plan, commenter })
    }

    fn inputs(&self, world: &WorldState, store: &Store, record: &mut FrameRecord) -> Result<FrameInputs, RunError> {
        let mut inputs = FrameInputs::default();
        let scenario = &world.scenario_meta.name;
        if self.config.input_mode.bev() {
            let png = encode_png(&render_bev(world, &self.config.bev));
            let name = store.write_image(scenario, world.frame_index, "bev", &png)?;
            let trails = encode_png(&render_bev(world, &self.config.bev.clone().with_trails()));
            record.images.push(name.clone());
            record.images.push(store.write_image(scenario, world.frame_index, "bev_trails", &trails)?);
            inputs.images.push(match self.config.image_transport {
                ImageTransport::Inline => ImagePayload::inline_png(&png),
                ImageTransport::Path => {
                    let path = store.scenario_dir(scenario)?.join(&name);
                    let abs = std::path::absolute(&path).unwrap_or(path);
                    ImagePayload::Path { path: abs.to_string_lossy().into_owned() }
                }
            });
        }
        if self.config.input_mode.text() {
            inputs.text = Some(render_text(world, &self.config.text_filter).to_string());
        }
        Ok(inputs)
    }

    /// Runs one scenario to completion, timeout or policy failure, storing
    /// every intervention frame and `episode.json` under `store`.
    pub fn run(&self, mut world: WorldState, policy: &mut dyn Policy, store: &Store) -> Result<EpisodeRecord, RunError> {
        let cfg = &self.config;
        let scenario = world.scenario_meta.name.clone();
        let budget = cfg.tick_budget.unwrap_or(world.scenario_meta.tick_budget);
        let start = world.frame_index;
        let mut action = ActionModule::new(cfg.action.clone(), Default::default());
        let mut detector = InfractionDetector::new(cfg.detector.clone());
        let mut ctx = FrameContext::default();
        let mut ticks = vec![tick_record(&world)];
        let mut infractions: Vec<InfractionEvent> = Vec::new();
        let mut interventions = Vec::new();
        let mut policy_calls = 0u64;
        let mut aborted = None;
        let mut terminated = Termination::Timeout;
        let mut finished = false;

        for tick in 0..budget {
            if tick % cfg.interval == 0 {
                let gt = self.commenter.annotate_frame(&world, &self.chain.nodes)?;
                let mut record = FrameRecord::new(&scenario, world.frame_index, gt);
                record.ego = Some(ObjectBox::ego(&world));
                record.objects = ObjectBox::actors(&world);
                let inputs = self.inputs(&world, store, &mut record)?;
                let outcome = execute_frame(
                    &self.chain,
                    &self.plan,
                    &mut ctx,
                    &record.qa_pairs,
                    &inputs,
                    policy,
                    &scenario,
                    world.frame_index,
                );
                let outcome = match outcome {
                    Ok(o) => o,
                    Err(e @ ExecError::Policy { .. }) => {
                        log::error!("{scenario} frame {}: {e}", world.frame_index);
                        aborted = Some(e.to_string());
                        store.write_frame(&record)?;
                        break;
                    }
                    Err(e) => return Err(RunError::Config(e.to_string())),
                };
                policy_calls += outcome.policy_calls as u64;
                record.policy_answers = outcome.answers.iter().map(|a| (a.qid, a.answer.clone())).collect();
                let extracted = extract_keys(outcome.answer(cfg.action_qid).unwrap_or(""));
                let (direction, speed) = action.intervene(extracted, &world);
                interventions.push(Intervention { frame_index: world.frame_index, extracted, direction, speed });
                store.write_frame(&record)?;
                store.write_state(&world)?;
            } else {
                action.hold(&world);
            }
            let control = action.control(&world, DEFAULT_DT);
            let next = step(&world, &control, DEFAULT_DT);
            infractions.extend(detector.observe(&world, &next, DEFAULT_DT));
            world = next;
            ticks.push(tick_record(&world));
            if detector.completed(&world) {
                terminated = Termination::Completion;
                finished = true;
                break;
            }
            if detector.off_route() {
                infractions.push(InfractionEvent {
                    kind: InfractionKind::OffRouteTermination,
                    frame_index: world.frame_index,
                    detail: "left the route for too long".into(),
                });
                terminated = Termination::Blocked;
                finished = true;
                break;
            }
        }
        if !finished && aborted.is_none() {
            infractions.push(InfractionEvent {
                kind: InfractionKind::Timeout,
                frame_index: world.frame_index,
                detail: format!("route unfinished after {} ticks", world.frame_index - start),
            });
        }
        let log = EpisodeLog {
            scenario: scenario.clone(),
            dt: DEFAULT_DT,
            ticks,
            infractions,
            route_completion: detector.route_completion(&world),
            terminated,
        };
        let record = EpisodeRecord {
            policy: policy.name().to_string(),
            policy_calls,
            interventions,
            aborted,
            metrics: report(&log, &cfg.penalties),
            log,
            warnings: action.warnings.clone(),
        };
        store.write_doc(&scenario, "episode.json", &record)?;
        Ok(record)
    }
}

/// One row of the closed-loop table; all columns in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub episodes: usize,
    #[serde(rename = "Driving Score")]
    pub driving_score: f64,
    #[serde(rename = "Success Rate")]
    pub success_rate: f64,
    #[serde(rename = "Efficiency")]
    pub efficiency: f64,
    #[serde(rename = "Comfortness")]
    pub comfort: f64,
    pub aborted: usize,
}

pub const SUMMARY_COLUMNS: [&str; 4] = ["Driving Score", "Success Rate", "Efficiency", "Comfortness"];

impl RunSummary {
    pub fn from_records(policy: &str, records: &[EpisodeRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| if n == 0 { 0.0 } else { records.iter().map(f).sum::<f64>() / n as f64 };
        Self {
            policy: policy.into(),
            episodes: n,
            driving_score: mean(&|r| r.metrics.driving_score),
            success_rate: mean(&|r| if r.metrics.success { 100.0 } else { 0.0 }),
            efficiency: mean(&|r| r.metrics.efficiency),
            comfort: mean(&|r| r.metrics.comfort),
            aborted: records.iter().filter(|r| r.aborted.is_some()).count(),
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.driving_score, self.success_rate, self.efficiency, self.comfort]
    }
}

/// Runs every configured scenario in order and writes `summary.json` at the store root.
pub fn run_all(
    runner: &EpisodeRunner,
    policy: &mut dyn Policy,
    store: &Store,
) -> Result<(Vec<EpisodeRecord>, RunSummary), RunError> {
    let mut records = Vec::new();
    for name in &runner.config.scenarios {
        let world = load_world(name, runner.config.seed)?;
        let rec = runner.run(world, policy, store)?;
        log::info!("{name}: DS {:.2}, success {}", rec.metrics.driving_score, rec.metrics.success);
        records.push(rec);
    }
    let summary = RunSummary::from_records(policy.name(), &records);
    crate::dataset::write_atomic(&store.root().join("summary.json"), &crate::dataset::to_json_bytes(&summary))?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Constant, GtEcho};

    #[test]
    fn config_validation() {
        assert!(EpisodeRunner::new(RunConfig { interval: 0, ..Default::default() }).is_err());
        let mut cfg = RunConfig::default();
        cfg.chain.nodes.push(99);
        assert!(matches!(EpisodeRunner::new(cfg), Err(RunError::Config(m)) if m.contains("99")));
        assert!(EpisodeRunner::new(RunConfig { action_qid: 37, ..Default::default() }).is_err());
    }

    #[test]
    fn gt_echo_follows_lead_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let runner = EpisodeRunner::new(RunConfig::default()).unwrap();
        let w = load_world("FollowLeadVehicle", 0).unwrap();
        let rec = runner.run(w, &mut GtEcho, &store).unwrap();
        assert_eq!(rec.metrics.driving_score, 100.0, "{:?}", rec.log.infractions);
        assert!(rec.metrics.success);
        assert_eq!(rec.policy_calls, 8 * rec.interventions.len() as u64);
        let frames = store.frames("FollowLeadVehicle").unwrap();
        assert_eq!(frames.len(), rec.interventions.len());
        assert!(frames.iter().all(|f| f % 5 == 0));
    }

    #[test]
    fn constant_policy_runs_the_red_light() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let runner = EpisodeRunner::new(RunConfig { input_mode: InputMode::Text, ..Default::default() }).unwrap();
        let w = load_world("RedLightJunctionTurn", 0).unwrap();
        let rec = runner.run(w, &mut Constant::default(), &store).unwrap();
        assert!(rec.log.infractions.iter().any(|e| e.kind == InfractionKind::RedLight), "{:?}", rec.log.infractions);
        assert!(!rec.metrics.success);
    }
}
