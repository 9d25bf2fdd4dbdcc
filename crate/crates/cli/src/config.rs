//! Run configuration: TOML file, then `LANEBENCH_*` environment variables.

use std::path::Path;

use lanebench_core::episode::RunConfig;
use toml::Value;

use crate::CliError;

pub const ENV_PREFIX: &str = "LANEBENCH_";

/// A value as TOML if it parses as one, else as a plain string.
fn env_value(key: &str, raw: &str) -> Value {
    if let Ok(t) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    if key == "scenarios" {
        return Value::Array(raw.split(',').map(|s| Value::String(s.trim().to_string())).filter(|v| v.as_str() != Some("")).collect());
    }
    Value::String(raw.to_string())
}

/// Applies `LANEBENCH_<FIELD>` overrides; `__` descends into tables,
/// so `LANEBENCH_WEIGHTS__EXTRA_RATIO=3` sets `weights.extra_ratio`.
pub fn apply_env(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, raw) in vars {
        let path: Vec<String> = k[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("{k}: empty key segment")));
        }
        if path[0] == "log" {
            continue;
        }
        let key = if path[0] == "chain" { "CHAIN".to_string() } else { path[0].clone() };
        let mut slot = table.entry(key).or_insert_with(|| Value::Table(Default::default()));
        for seg in &path[1..] {
            let Value::Table(t) = slot else {
                return Err(CliError::Config(format!("{k}: {seg} is not inside a table")));
            };
            let seg = if path[0] == "chain" { seg.to_uppercase() } else { seg.clone() };
            slot = t.entry(seg).or_insert_with(|| Value::Table(Default::default()));
        }
        *slot = env_value(path.last().unwrap(), &raw);
    }
    Ok(())
}

/// Deep merge; `CHAIN` is replaced as a whole so stale edges never linger.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if k != "CHAIN" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Defaults, overlaid by `file` if given, then by the environment.
pub fn load_config(file: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig, CliError> {
    let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let over = text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        merge(&mut table, over);
    }
    apply_env(&mut table, vars)?;
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    check(&cfg)?;
    Ok(cfg)
}

pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.scenarios.is_empty() {
        return Err(CliError::Config("no scenarios configured".into()));
    }
    if cfg.timeout_secs == 0 {
        return Err(CliError::Config("timeout_secs must be positive".into()));
    }
    lanebench_core::episode::EpisodeRunner::new(cfg.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_without_file() {
        let cfg = load_config(None, env(&[])).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "policy = \"constant\"\ninterval = 3\nscenarios = [\"ObstacleAhead\"]\n[weights]\nextra_ratio = 4.0\n").unwrap();
        let cfg = load_config(
            Some(&p),
            env(&[
                ("LANEBENCH_INTERVAL", "7"),
                ("LANEBENCH_POLICY", "noisy-gt:0.5"),
                ("LANEBENCH_SCENARIOS", "FollowLeadVehicle, InvadingTurn"),
                ("LANEBENCH_WEIGHTS__IMPORTANCE_CONSTANT", "6"),
                ("LANEBENCH_CHAIN__USE_GT", "[24, 43]"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.interval, 7);
        assert_eq!(cfg.policy, "noisy-gt:0.5");
        assert_eq!(cfg.scenarios, vec!["FollowLeadVehicle", "InvadingTurn"]);
        assert_eq!(cfg.weights.extra_ratio, 4.0);
        assert_eq!(cfg.weights.importance_constant, 6.0);
        assert_eq!(cfg.chain.use_gt, vec![24, 43]);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "intervall = 3\n").unwrap();
        assert_eq!(load_config(Some(&p), env(&[])).unwrap_err().exit_code(), 1);
        assert_eq!(load_config(None, env(&[("LANEBENCH_INTERVAL", "0")])).unwrap_err().exit_code(), 1);
        assert_eq!(load_config(None, env(&[("LANEBENCH_SCENARIOS", "")])).unwrap_err().exit_code(), 1);
        assert_eq!(load_config(Some(&dir.path().join("missing.toml")), env(&[])).unwrap_err().exit_code(), 1);
        std::fs::write(&p, "[CHAIN]\nNODE = [1, 2]\nEDGE = {\"1\" = [2], \"2\" = [1]}\n").unwrap();
        assert!(load_config(Some(&p), env(&[])).unwrap_err().to_string().contains("cycle"));
    }
}
