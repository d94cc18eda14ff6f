//! Run configuration: one TOML file, overridable key by key.

use std::path::{Path, PathBuf};

use lsm_core::eval::AdaptationStudyConfig;
use lsm_core::featurize::{NegativeSamplingConfig, StackPaths};
use lsm_core::forest::ForestConfig;
use lsm_core::meta::{AdaptConfig, MetaConfig};
use lsm_core::raster::ClassBreaks;
use lsm_core::shapley::ShapleyMode;
use lsm_core::synth::{SynthConfig, WorldPaths};
use lsm_core::tasks::MetaPoolConfig;
use lsm_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LSM_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding a world in the conventional layout. Used for any
    /// layer not given explicitly.
    pub world: PathBuf,
    /// Explicit thematic layer paths; overrides the `world` layout.
    pub stack: Option<StackPaths>,
    pub inventory: Option<PathBuf>,
    pub deformation: Option<PathBuf>,
    /// Featurized sample table; defaults to `<out_dir>/samples.csv`.
    pub samples: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            world: PathBuf::from("world"),
            stack: None,
            inventory: None,
            deformation: None,
            samples: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub rich_threshold: usize,
    pub slope_min: f64,
    /// Nearest-point distance beyond which a cell gets deformation level 0.
    pub deformation_cutoff: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            rich_threshold: lsm_core::tasks::DEFAULT_RICH_THRESHOLD,
            slope_min: lsm_core::enhance::DEFAULT_SLOPE_MIN,
            deformation_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub mode: ShapleyMode,
    /// Instances attributed per year, taken evenly by sample id.
    pub max_instances: usize,
    pub background: usize,
    pub top_k: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            mode: ShapleyMode::default(),
            max_instances: 100,
            background: 16,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    pub train_fraction: f64,
    /// Passes over the training split for the from-scratch MLP baseline.
    pub mlp_epochs: usize,
    pub mlp_lr: f64,
    pub adaptation_updates: Vec<usize>,
    pub adaptation: AdaptationStudyConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            repeats: 5,
            train_fraction: 0.75,
            mlp_epochs: 100,
            mlp_lr: 0.05,
            adaptation_updates: vec![0, 1, 2, 3, 4, 5],
            adaptation: AdaptationStudyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Inclusive year range of the study.
    pub span: (i32, i32),
    pub paths: Paths,
    pub thresholds: Thresholds,
    pub breaks: ClassBreaks,
    pub negatives: NegativeSamplingConfig,
    pub forest: ForestConfig,
    pub pool: MetaPoolConfig,
    pub meta: MetaConfig,
    pub adapt: AdaptConfig,
    pub explain: ExplainConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    /// Directory relative paths are resolved against; not part of the hash.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            seed: 42,
            span: (synth.first_year, synth.last_year()),
            paths: Paths::default(),
            thresholds: Thresholds::default(),
            breaks: ClassBreaks::default(),
            negatives: NegativeSamplingConfig::default(),
            forest: ForestConfig::default(),
            pool: MetaPoolConfig::default(),
            meta: MetaConfig::default(),
            adapt: AdaptConfig::default(),
            explain: ExplainConfig::default(),
            eval: EvalConfig::default(),
            synth,
            root: PathBuf::from("."),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Anything that is not a TOML literal is taken as a bare string.
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `section.key=value` to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parse TOML text plus overrides; relative paths resolve against `root`.
    pub fn from_toml(text: &str, overrides: &[String], root: &Path) -> Result<RunConfig> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        cfg.root = root.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from an explicit file, else from `$LSM_CONFIG`, else defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(env) {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                let root = p.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
                let root = if root.as_os_str().is_empty() { PathBuf::from(".") } else { root };
                RunConfig::from_toml(&text, overrides, &root)
            }
            None => RunConfig::from_toml("", overrides, Path::new(".")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.span.0 > self.span.1 {
            return Err(Error::Config(format!("span {:?} is reversed", self.span)));
        }
        if !(0.0..1.0).contains(&self.eval.train_fraction) || self.eval.train_fraction == 0.0 {
            return Err(Error::Config("eval.train_fraction must be in (0, 1)".into()));
        }
        if self.eval.repeats == 0 {
            return Err(Error::Config("eval.repeats must be positive".into()));
        }
        if self.explain.max_instances == 0 || self.explain.background == 0 {
            return Err(Error::Config("explain sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out_dir)
    }

    pub fn world(&self) -> WorldPaths {
        WorldPaths::under(self.resolve(&self.paths.world))
    }

    pub fn stack_paths(&self) -> StackPaths {
        match &self.paths.stack {
            Some(s) => {
                let mut s = s.clone();
                for p in [
                    &mut s.elevation,
                    &mut s.slope,
                    &mut s.curvature,
                    &mut s.aspect,
                    &mut s.ndvi,
                    &mut s.spi,
                    &mut s.twi,
                    &mut s.faults,
                    &mut s.drainage,
                    &mut s.roads,
                    &mut s.lithology,
                    &mut s.landuse,
                    &mut s.catchments,
                    &mut s.stations,
                ] {
                    *p = self.resolve(p);
                }
                s
            }
            None => self.world().stack,
        }
    }

    pub fn inventory_path(&self) -> PathBuf {
        self.paths
            .inventory
            .as_ref()
            .map_or_else(|| self.world().inventory, |p| self.resolve(p))
    }

    pub fn deformation_path(&self) -> PathBuf {
        self.paths
            .deformation
            .as_ref()
            .map_or_else(|| self.world().deformation, |p| self.resolve(p))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.paths
            .samples
            .as_ref()
            .map_or_else(|| self.out_dir().join("samples.csv"), |p| self.resolve(p))
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.span.0..=self.span.1
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn require_exists(what: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing {what}: {}", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = RunConfig::from_toml("", &[], Path::new(".")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = vec![
            "forest.n_trees=7".to_string(),
            "paths.out_dir=elsewhere".to_string(),
            "span=[2001, 2003]".to_string(),
            "meta.optimizer=adam".to_string(),
        ];
        let c = RunConfig::from_toml("seed = 3\n[forest]\nmax_depth = 4\n", &o, Path::new("/r")).unwrap();
        assert_eq!(c.forest.n_trees, 7);
        assert_eq!(c.forest.max_depth, 4);
        assert_eq!(c.span, (2001, 2003));
        assert_eq!(c.out_dir(), PathBuf::from("/r/elsewhere"));
        assert_eq!(c.meta.optimizer, lsm_core::meta::OuterOptimizer::Adam);
    }

    #[test]
    fn unknown_keys_and_bad_overrides_fail() {
        assert!(RunConfig::from_toml("[forest]\nntrees = 3\n", &[], Path::new(".")).is_err());
        assert!(RunConfig::from_toml("", &["nonsense".into()], Path::new(".")).is_err());
        assert!(RunConfig::from_toml("span = [2005, 2001]", &[], Path::new(".")).is_err());
    }

    #[test]
    fn hash_ignores_root_but_not_settings() {
        let a = RunConfig::from_toml("", &[], Path::new("/a")).unwrap();
        let b = RunConfig::from_toml("", &[], Path::new("/b")).unwrap();
        let c = RunConfig::from_toml("seed = 1", &[], Path::new("/a")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn serialized_config_round_trips() {
        let a = RunConfig::default();
        let b = RunConfig::from_toml(&a.to_toml(), &[], Path::new(".")).unwrap();
        assert_eq!(a, b);
    }
}
