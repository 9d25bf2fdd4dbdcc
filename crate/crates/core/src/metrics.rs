//! Driving score, success, efficiency and comfort over an episode log.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfractionKind {
    Collision,
    RedLight,
    StopSign,
    Timeout,
    OffRouteTermination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub frame_index: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completion,
    Timeout,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub frame_index: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Speed of nearby traffic, or the speed limit when there is none.
    pub reference_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario: String,
    pub dt: f64,
    pub ticks: Vec<TickRecord>,
    pub infractions: Vec<InfractionEvent>,
    pub route_completion: f64,
    pub terminated: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub collision: f64,
    pub red_light: f64,
    pub stop_sign: f64,
    pub timeout: f64,
    /// Termination already cuts route completion, so no extra factor by default.
    pub off_route: f64,
    pub max_accel: f64,
    pub max_jerk: f64,
    pub speed_floor: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            collision: 0.6,
            red_light: 0.8,
            stop_sign: 0.8,
            timeout: 0.7,
            off_route: 1.0,
            max_accel: 3.0,
            max_jerk: 5.0,
            speed_floor: 0.1,
        }
    }
}

impl PenaltyConfig {
    pub fn factor(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::Collision => self.collision,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
            InfractionKind::Timeout => self.timeout,
            InfractionKind::OffRouteTermination => self.off_route,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub driving_score: f64,
    pub success: bool,
    pub efficiency: f64,
    pub comfort: f64,
    pub route_completion: f64,
    pub infractions: usize,
}

pub fn driving_score(log: &EpisodeLog, cfg: &PenaltyConfig) -> f64 {
    let start = 100.0 * log.route_completion.clamp(0.0, 1.0);
    log.infractions.iter().fold(start, |ds, e| ds * cfg.factor(e.kind))
}

pub fn success(log: &EpisodeLog) -> bool {
    log.route_completion >= 1.0 && log.infractions.is_empty()
}

pub fn efficiency(log: &EpisodeLog, cfg: &PenaltyConfig) -> f64 {
    if log.ticks.is_empty() {
        return 0.0;
    }
    let sum: f64 = log
        .ticks
        .iter()
        .map(|t| t.speed / t.reference_speed.max(cfg.speed_floor))
        .sum();
    100.0 * sum / log.ticks.len() as f64
}

/// Share of ticks within the acceleration and jerk limits; needs three ticks.
pub fn comfort(log: &EpisodeLog, cfg: &PenaltyConfig) -> f64 {
    let v: Vec<f64> = log.ticks.iter().map(|t| t.speed).collect();
    if v.len() < 3 || log.dt <= 0.0 {
        return 100.0;
    }
    let accel: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / log.dt).collect();
    let judged = accel.len() - 1;
    let ok = accel
        .windows(2)
        .filter(|a| {
            let jerk = (a[1] - a[0]) / log.dt;
            a[1].abs() <= cfg.max_accel + 1e-9 && jerk.abs() <= cfg.max_jerk + 1e-9
        })
        .count();
    100.0 * ok as f64 / judged as f64
}

pub fn report(log: &EpisodeLog, cfg: &PenaltyConfig) -> MetricReport {
    MetricReport {
        scenario: log.scenario.clone(),
        driving_score: driving_score(log, cfg),
        success: success(log),
        efficiency: efficiency(log, cfg),
        comfort: comfort(log, cfg),
        route_completion: log.route_completion,
        infractions: log.infractions.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with(speeds: &[f64], infractions: &[InfractionKind], completion: f64) -> EpisodeLog {
        EpisodeLog {
            scenario: "t".into(),
            dt: 0.1,
            ticks: speeds
                .iter()
                .enumerate()
                .map(|(i, v)| TickRecord {
                    frame_index: i as u64,
                    x: 0.0,
                    y: 0.0,
                    heading: 0.0,
                    speed: *v,
                    reference_speed: 10.0,
                })
                .collect(),
            infractions: infractions
                .iter()
                .map(|k| InfractionEvent { kind: *k, frame_index: 0, detail: String::new() })
                .collect(),
            route_completion: completion,
            terminated: Termination::Completion,
        }
    }

    #[test]
    fn score_composition() {
        let cfg = PenaltyConfig::default();
        assert_eq!(driving_score(&log_with(&[1.0], &[], 1.0), &cfg), 100.0);
        assert_eq!(driving_score(&log_with(&[1.0], &[InfractionKind::Collision], 1.0), &cfg), 60.0);
        let two = log_with(&[1.0], &[InfractionKind::RedLight, InfractionKind::Timeout], 1.0);
        assert_eq!(driving_score(&two, &cfg), 56.0);
    }

    #[test]
    fn success_needs_full_clean_run() {
        assert!(success(&log_with(&[1.0], &[], 1.0)));
        assert!(!success(&log_with(&[1.0], &[], 0.99)));
        assert!(!success(&log_with(&[1.0], &[InfractionKind::StopSign], 1.0)));
    }

    #[test]
    fn efficiency_ratio() {
        let cfg = PenaltyConfig::default();
        assert!((efficiency(&log_with(&[10.0; 5], &[], 1.0), &cfg) - 100.0).abs() < 1e-9);
        assert!((efficiency(&log_with(&[5.0; 5], &[], 1.0), &cfg) - 50.0).abs() < 1e-9);
        assert_eq!(efficiency(&log_with(&[0.0; 5], &[], 1.0), &cfg), 0.0);
    }

    #[test]
    fn comfort_thresholds() {
        let cfg = PenaltyConfig::default();
        assert_eq!(comfort(&log_with(&[5.0; 10], &[], 1.0), &cfg), 100.0);
        let mut v = vec![10.0; 101];
        for x in v.iter_mut().skip(51) {
            *x -= 0.8;
        }
        assert!(comfort(&log_with(&v, &[], 1.0), &cfg) <= 99.0);
        let alt: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 5.0 } else { 5.4 }).collect();
        assert_eq!(comfort(&log_with(&alt, &[], 1.0), &cfg), 0.0);
    }
}
