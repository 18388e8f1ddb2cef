//! Run configuration assembly: flags > environment > config file > defaults.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bisectr_core::generators::GeneratorKind;
use bisectr_core::lang::LanguageProfile;
use bisectr_core::llm::{Backend, Gateway, LiveBackend, LiveConfig, ScriptedBackend, TranscriptStore};
use bisectr_core::pipeline::{PipelineConfig, PipelineMode};
use serde::Deserialize;

/// Optional TOML config file: every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub transcript: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub votes: Option<u32>,
    pub token_budget: Option<u64>,
    pub num_lines: Option<u32>,
    pub candidate_cap: Option<usize>,
    pub generators: Option<String>,
    pub mode: Option<String>,
    pub keep_fixes_tags: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parse config file {}", path.display()))
    }
}

pub fn parse_mode(s: &str) -> Result<PipelineMode> {
    Ok(match s {
        "full" => PipelineMode::Full,
        "baseline-early-stop" | "baseline_early_stop" => PipelineMode::BaselineEarlyStop,
        "baseline-one-shot" | "baseline_one_shot" => PipelineMode::BaselineOneShot,
        other => bail!("unknown mode {other:?} (full | baseline-early-stop | baseline-one-shot)"),
    })
}

pub fn parse_generators(s: &str) -> Result<BTreeSet<GeneratorKind>> {
    let mut out = BTreeSet::new();
    for part in s.split(',') {
        match part.trim().to_ascii_lowercase().as_str() {
            "c1" => out.insert(GeneratorKind::C1Function),
            "c2" => out.insert(GeneratorKind::C2CriticalLine),
            "c3" => out.insert(GeneratorKind::C3CommitMessage),
            "" => continue,
            other => bail!("unknown generator {other:?} (want c1,c2,c3)"),
        };
    }
    if out.is_empty() {
        bail!("no generators selected");
    }
    Ok(out)
}

/// Everything a pipeline run needs, resolved from all config layers.
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub backend_kind: String,
    pub base_url: String,
    pub api_key: Option<String>,
    pub transcript: Option<PathBuf>,
    pub record: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Resolved {
    /// Build the gateway for this run. `recorded` replays strictly from the
    /// transcript; `scripted` loads response rules from the transcript path;
    /// `live` talks HTTP and appends to the transcript when recording.
    pub fn gateway(&self) -> Result<Gateway> {
        let backend = match self.backend_kind.as_str() {
            "live" => Backend::Live(LiveBackend::new(LiveConfig {
                base_url: self.base_url.clone(),
                api_key: self.api_key.clone(),
                ..LiveConfig::default()
            })),
            "recorded" => {
                let Some(path) = &self.transcript else {
                    bail!("backend=recorded requires --transcript");
                };
                Backend::Recorded(TranscriptStore::load(path)?)
            }
            "scripted" => {
                let Some(path) = &self.transcript else {
                    bail!("backend=scripted requires --transcript pointing at a script JSON file");
                };
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("read script file {}", path.display()))?;
                Backend::Scripted(ScriptedBackend::from_json(&text)?)
            }
            other => bail!("unknown backend {other:?} (live | recorded | scripted)"),
        };
        let mut gateway = Gateway::new(backend);
        if self.record {
            if self.backend_kind != "live" {
                bail!("--record only makes sense with backend=live");
            }
            let Some(path) = &self.transcript else {
                bail!("--record requires --transcript");
            };
            gateway = gateway.record_to(TranscriptStore::load(path)?);
        }
        Ok(gateway)
    }

    /// Cache slot for a run: `<cache_dir>/<fix12>/<config12>/`.
    pub fn cache_slot(&self, fix_hash: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let digest = self.config_digest();
        Some(dir.join(&fix_hash[..12.min(fix_hash.len())]).join(digest))
    }

    fn config_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let summary = format!(
            "{:?}|{}|{}|{:?}",
            self.pipeline, self.backend_kind, self.base_url, self.transcript
        );
        let mut hasher = Sha256::new();
        hasher.update(summary.as_bytes());
        hex::encode(hasher.finalize())[..12].to_string()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn resolve(
    file: FileConfig,
    model: Option<String>,
    backend: Option<String>,
    base_url: Option<String>,
    transcript: Option<PathBuf>,
    record: bool,
    cache_dir: Option<PathBuf>,
    votes: Option<u32>,
    token_budget: Option<u64>,
    num_lines: Option<u32>,
    candidate_cap: Option<usize>,
    generators: Option<String>,
    mode: Option<String>,
    keep_fixes_tags: bool,
    api_key: Option<String>,
) -> Result<Resolved> {
    let defaults = PipelineConfig::default();
    let generators_spec = generators.or(file.generators);
    let mode_spec = mode.or(file.mode);
    let pipeline = PipelineConfig {
        generators_enabled: match generators_spec {
            Some(s) => parse_generators(&s)?,
            None => defaults.generators_enabled,
        },
        votes: votes.or(file.votes).unwrap_or(defaults.votes),
        mode: match mode_spec {
            Some(s) => parse_mode(&s)?,
            None => defaults.mode,
        },
        candidate_cap: candidate_cap
            .or(file.candidate_cap)
            .unwrap_or(defaults.candidate_cap),
        token_budget: token_budget
            .or(file.token_budget)
            .unwrap_or(defaults.token_budget),
        model: model.or(file.model).unwrap_or(defaults.model),
        num_lines: num_lines.or(file.num_lines).unwrap_or(defaults.num_lines),
        strip_fixes_tags: !(keep_fixes_tags || file.keep_fixes_tags.unwrap_or(false)),
        language: LanguageProfile::CLike,
        vote_in_post_filter: false,
    };
    if let Err(msg) = pipeline.validate() {
        bail!("{msg}");
    }
    Ok(Resolved {
        pipeline,
        backend_kind: backend.or(file.backend).unwrap_or_else(|| "live".into()),
        base_url: base_url
            .or(file.base_url)
            .unwrap_or_else(|| "https://api.openai.com/v1".into()),
        api_key,
        transcript: transcript.or(file.transcript),
        record,
        cache_dir: cache_dir.or(file.cache_dir),
    })
}
