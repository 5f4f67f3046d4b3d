//! Run configuration file (TOML). Relative paths resolve against the
//! directory holding the file; every default is filled in on load so the
//! resolved config can be echoed into run metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use amod_core::demand::DEFAULT_CAPACITY;
use amod_core::dispatch::DispatchConfig;
use amod_core::engine::DEFAULT_SNAP_RADIUS_M;
use amod_core::fleet::Strategy;
use amod_core::road::DEFAULT_SPEED_LIMIT_MPS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub zones: ZonesSection,
    pub demand: DemandSection,
    pub fleet: FleetSection,
    pub dispatch: DispatchSection,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    #[serde(default = "default_speed_limit")]
    pub speed_limit_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonesSection {
    pub geojson: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemandSection {
    /// Raw trip table, cleaned on load; patience is drawn with `seed`.
    Csv {
        path: PathBuf,
        seed: u64,
        #[serde(default = "default_capacity")]
        capacity: u32,
        #[serde(default)]
        aliases: BTreeMap<String, String>,
    },
    /// Pre-cleaned requests with explicit times and patience.
    Scripted {
        path: PathBuf,
        #[serde(default)]
        epoch: Option<String>,
    },
    /// Poisson arrivals spread uniformly over the zones.
    Synthetic {
        seed: u64,
        rate_per_hour: f64,
        duration_s: f64,
        #[serde(default = "default_party_weights")]
        party_weights: Vec<f64>,
        #[serde(default)]
        epoch: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    pub size: usize,
    pub seed: u64,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
    /// Explicit start nodes, one per vehicle; drawn uniformly when absent.
    #[serde(default)]
    pub start_nodes: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchSection {
    pub strategy: Strategy,
    pub eat: bool,
    #[serde(default = "default_true")]
    pub global_fallback: bool,
    #[serde(default = "default_oss_threshold")]
    pub oss_threshold_s: f64,
    #[serde(default = "default_snap_radius")]
    pub snap_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    /// `[start_s, multiplier]` breakpoints; free flow before the first.
    #[serde(default)]
    pub schedule: Vec<(f64, f64)>,
    #[serde(default)]
    pub random_walk: Option<WalkSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub seed: u64,
    pub step_s: f64,
    pub sigma: f64,
    /// Defaults to the last request time plus the longest patience.
    #[serde(default)]
    pub horizon_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_period")]
    pub period_s: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir(), period_s: default_period() }
    }
}

fn default_speed_limit() -> f64 {
    DEFAULT_SPEED_LIMIT_MPS
}
fn default_capacity() -> u32 {
    DEFAULT_CAPACITY
}
fn default_party_weights() -> Vec<f64> {
    vec![1.0]
}
fn default_true() -> bool {
    true
}
fn default_oss_threshold() -> f64 {
    60.0
}
fn default_snap_radius() -> f64 {
    DEFAULT_SNAP_RADIUS_M
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_period() -> f64 {
    3600.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.network.nodes);
        fix(&mut self.network.edges);
        fix(&mut self.zones.geojson);
        match &mut self.demand {
            DemandSection::Csv { path, .. } | DemandSection::Scripted { path, .. } => fix(path),
            DemandSection::Synthetic { .. } => {}
        }
        fix(&mut self.output.dir);
    }

    /// Replaces every seed in the file with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.fleet.seed = seed;
        match &mut self.demand {
            DemandSection::Csv { seed: s, .. } | DemandSection::Synthetic { seed: s, .. } => *s = seed,
            DemandSection::Scripted { .. } => {}
        }
        if let Some(w) = &mut self.traffic.random_walk {
            w.seed = seed;
        }
    }

    pub fn dispatch_config(&self) -> DispatchConfig {
        let d = &self.dispatch;
        DispatchConfig {
            strategy: d.strategy,
            eat_enabled: d.eat,
            global_fallback_after_component: d.global_fallback,
            oss_reassign_threshold_s: d.oss_threshold_s,
        }
    }

    /// The same config with another strategy and expansion setting.
    pub fn with_dispatch(&self, strategy: Strategy, eat: bool) -> Self {
        let mut c = self.clone();
        c.dispatch.strategy = strategy;
        c.dispatch.eat = eat;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
nodes = "n.txt"
edges = "e.txt"

[zones]
geojson = "z.geojson"

[demand]
kind = "synthetic"
seed = 3
rate_per_hour = 60
duration_s = 3600

[fleet]
size = 5
seed = 1

[dispatch]
strategy = "OSS"
eat = true
"#;

    #[test]
    fn defaults_are_filled_in() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.fleet.capacity, DEFAULT_CAPACITY);
        assert!(cfg.dispatch.global_fallback);
        assert_eq!(cfg.dispatch.oss_threshold_s, 60.0);
        assert_eq!(cfg.output.period_s, 3600.0);
        assert!(cfg.traffic.schedule.is_empty());
        assert_eq!(cfg.dispatch_config().label(), "OSS-EAT");
    }

    #[test]
    fn unknown_strategy_is_rejected() {
        let bad = MINIMAL.replace("\"OSS\"", "\"FASTEST\"");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("size = 5", "size = 5\ncolour = \"red\"");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/city"));
        assert_eq!(cfg.network.nodes, PathBuf::from("/data/city/n.txt"));
        assert_eq!(cfg.output.dir, PathBuf::from("/data/city/out"));
    }

    #[test]
    fn seed_override_touches_every_seed() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.traffic.random_walk = Some(WalkSection { seed: 9, step_s: 600.0, sigma: 0.1, horizon_s: None });
        cfg.override_seeds(42);
        assert_eq!(cfg.fleet.seed, 42);
        assert!(matches!(cfg.demand, DemandSection::Synthetic { seed: 42, .. }));
        assert_eq!(cfg.traffic.random_walk.unwrap().seed, 42);
    }
}
