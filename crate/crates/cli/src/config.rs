//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use comprank::agents::{LlmConfig, MockPolicy};
use comprank::pipeline::{FailurePolicy, PipelineConfig};
use comprank::retriever::ScoreWeights;
use comprank::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the holdout split.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub holdout_fraction: f64,
    pub max_in_flight: usize,
    /// Write prompts and raw responses to `audit.jsonl`. Defaults to on
    /// whenever a stage talks to a real endpoint.
    pub audit: Option<bool>,
    pub dataset: DatasetSpec,
    pub retriever: RetrieverSpec,
    pub pipeline: PipelineSpec,
    pub agents: AgentsSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            holdout_fraction: 0.2,
            max_in_flight: 8,
            audit: None,
            dataset: DatasetSpec::default(),
            retriever: RetrieverSpec::default(),
            pipeline: PipelineSpec::default(),
            agents: AgentsSpec::default(),
        }
    }
}

/// Either catalog files or a synthetic generator config. With neither, a
/// default synthetic catalog is generated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: Option<String>,
    pub items: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Heuristic,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverSpec {
    pub kind: RetrieverKind,
    /// Method label in reports; defaults to `heuristic` or the scores file stem.
    pub name: Option<String>,
    /// Scores file for `kind = "precomputed"`.
    pub path: Option<PathBuf>,
    pub exclude_train_neighbors: bool,
    pub weights: ScoreWeights,
}

impl Default for RetrieverSpec {
    fn default() -> Self {
        RetrieverSpec {
            kind: RetrieverKind::Heuristic,
            name: None,
            path: None,
            exclude_train_neighbors: true,
            weights: ScoreWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    /// `fig1` (50/25) or `fig2` (100/50).
    pub preset: Option<String>,
    pub n_div: Option<usize>,
    pub n_acc: Option<usize>,
    pub cutoffs: Option<Vec<usize>>,
    pub on_failure: Option<FailurePolicy>,
    pub max_prompt_candidates: Option<usize>,
}

impl PipelineSpec {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let preset = self.preset.as_deref().unwrap_or("fig1");
        let mut cfg = PipelineConfig::preset(preset).with_context(|| {
            format!("unknown pipeline preset {preset:?} (expected fig1 or fig2)")
        })?;
        if let Some(v) = self.n_div {
            cfg.n_div = v;
        }
        if let Some(v) = self.n_acc {
            cfg.n_acc = v;
        }
        if let Some(v) = &self.cutoffs {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            cfg.cutoffs = v;
        }
        if let Some(v) = self.on_failure {
            cfg.on_failure = v;
        }
        if let Some(v) = self.max_prompt_candidates {
            cfg.max_prompt_candidates = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exactly one of `mock` or `endpoint`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSpec {
    /// `identity`, `reverse`, `shuffle:<seed>` or `oracle`.
    pub mock: Option<String>,
    pub endpoint: Option<LlmConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transport {
    Mock(MockPolicy),
    Endpoint(LlmConfig),
}

impl AgentSpec {
    pub fn transport(&self, stage: &str) -> Result<Transport> {
        match (&self.mock, &self.endpoint) {
            (Some(m), None) => Ok(Transport::Mock(
                m.parse().with_context(|| format!("{stage} agent"))?,
            )),
            (None, Some(e)) => {
                e.validate()
                    .with_context(|| format!("{stage} agent endpoint"))?;
                Ok(Transport::Endpoint(e.clone()))
            }
            (None, None) => {
                bail!("{stage} agent: no transport configured (set `mock` or `endpoint`)")
            }
            (Some(_), Some(_)) => bail!("{stage} agent: set exactly one of `mock` and `endpoint`"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsSpec {
    pub diversity: AgentSpec,
    pub accuracy: AgentSpec,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub retriever: Option<RetrieverKind>,
    pub scores: Option<PathBuf>,
    pub retriever_name: Option<String>,
    pub mock: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub dataset_name: Option<String>,
}

fn resolve_path(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve_path(base, &mut cfg.out);
        resolve_path(base, &mut cfg.dataset.items);
        resolve_path(base, &mut cfg.dataset.edges);
        resolve_path(base, &mut cfg.retriever.path);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.preset {
            self.pipeline.preset = Some(v);
            self.pipeline.n_div = None;
            self.pipeline.n_acc = None;
        }
        if let Some(v) = o.retriever {
            self.retriever.kind = v;
        }
        if let Some(v) = o.scores {
            self.retriever.path = Some(v);
        }
        if let Some(v) = o.retriever_name {
            self.retriever.name = Some(v);
        }
        if let Some(m) = o.mock {
            for spec in [&mut self.agents.diversity, &mut self.agents.accuracy] {
                spec.mock = Some(m.clone());
                spec.endpoint = None;
            }
        }
        if o.endpoint.is_some() || o.model.is_some() {
            for spec in [&mut self.agents.diversity, &mut self.agents.accuracy] {
                let mut llm = spec.endpoint.clone().unwrap_or_default();
                if let Some(url) = &o.endpoint {
                    llm.base_url = url.clone();
                }
                if let Some(model) = &o.model {
                    llm.model = model.clone();
                }
                spec.endpoint = Some(llm);
                spec.mock = None;
            }
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.out {
            self.out = Some(v);
        }
        if let Some(v) = o.items {
            self.dataset.items = Some(v);
        }
        if let Some(v) = o.edges {
            self.dataset.edges = Some(v);
        }
        if let Some(v) = o.dataset_name {
            self.dataset.name = Some(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match (&d.items, &d.edges, &d.synth) {
            (Some(_), Some(_), None) | (None, None, _) => {}
            (Some(_), Some(_), Some(_)) => {
                bail!("dataset: give either items/edges files or a synth config, not both")
            }
            _ => bail!("dataset: items and edges must be given together"),
        }
        match (self.retriever.kind, &self.retriever.path) {
            (RetrieverKind::Precomputed, None) => {
                bail!("retriever: precomputed retriever needs a scores path")
            }
            (RetrieverKind::Heuristic, Some(p)) => bail!(
                "retriever: heuristic retriever given a scores path ({}); pick one source",
                p.display()
            ),
            _ => {}
        }
        if self.out.is_none() {
            bail!("no output directory (set `out` or pass --out)");
        }
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be positive");
        }
        self.pipeline.resolve()?;
        self.agents.diversity.transport("diversity")?;
        self.agents.accuracy.transport("accuracy")?;
        Ok(())
    }

    pub fn uses_endpoint(&self) -> bool {
        self.agents.diversity.endpoint.is_some() || self.agents.accuracy.endpoint.is_some()
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        match &self.dataset.items {
            Some(p) => p
                .parent()
                .and_then(|d| d.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
            None => "synthetic".into(),
        }
    }

    pub fn retriever_name(&self) -> String {
        if let Some(n) = &self.retriever.name {
            return n.clone();
        }
        match (self.retriever.kind, &self.retriever.path) {
            (RetrieverKind::Precomputed, Some(p)) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "precomputed".into()),
            _ => "heuristic".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        let mut c = RunConfig {
            out: Some("out".into()),
            ..RunConfig::default()
        };
        c.apply(Overrides {
            mock: Some("identity".into()),
            ..Overrides::default()
        });
        c
    }

    #[test]
    fn parses_documented_keys() {
        let text = r#"
            seed = 3
            out = "runs/a"
            holdout_fraction = 0.25
            [dataset]
            name = "Cell Phones"
            items = "data/items.jsonl"
            edges = "data/edges.jsonl"
            [retriever]
            kind = "precomputed"
            path = "scores/graphsage.jsonl"
            name = "GraphSage"
            [pipeline]
            preset = "fig2"
            cutoffs = [1, 3, 5, 10]
            on_failure = "abort"
            [agents.diversity]
            mock = "shuffle:4"
            [agents.accuracy.endpoint]
            base_url = "http://localhost:8000/v1"
            model = "llama"
            max_retries = 2
            timeout = 30000
        "#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(
            cfg.dataset.items.as_deref(),
            Some(dir.path().join("data/items.jsonl").as_path())
        );
        assert_eq!(cfg.retriever_name(), "GraphSage");
        assert_eq!(cfg.dataset_name(), "Cell Phones");
        let p = cfg.pipeline.resolve().unwrap();
        assert_eq!((p.n_div, p.n_acc), (100, 50));
        assert_eq!(p.on_failure, FailurePolicy::Abort);
        assert!(cfg.uses_endpoint());
        match cfg.agents.accuracy.transport("accuracy").unwrap() {
            Transport::Endpoint(e) => {
                assert_eq!(e.max_retries, 2);
                assert_eq!(e.timeout, std::time::Duration::from_secs(30));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
    }

    #[test]
    fn one_retriever_source() {
        let mut c = base();
        c.retriever.path = Some("x.jsonl".into());
        assert!(c.validate().is_err());
        c.retriever.kind = RetrieverKind::Precomputed;
        c.validate().unwrap();
        c.retriever.path = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn one_transport_per_stage() {
        let mut c = base();
        c.agents.accuracy.endpoint = Some(LlmConfig::default());
        assert!(c.validate().is_err());
        c.agents.accuracy.mock = None;
        c.validate().unwrap();
        c.agents.accuracy.endpoint = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn preset_flag_overrides_explicit_sizes() {
        let mut c = base();
        c.pipeline.n_div = Some(30);
        c.pipeline.n_acc = Some(20);
        c.apply(Overrides {
            preset: Some("fig2".into()),
            ..Overrides::default()
        });
        let p = c.pipeline.resolve().unwrap();
        assert_eq!((p.n_div, p.n_acc), (100, 50));
    }

    #[test]
    fn cutoff_above_n_acc_rejected() {
        let mut c = base();
        c.pipeline.n_acc = Some(5);
        assert!(c.validate().is_err());
    }
}
