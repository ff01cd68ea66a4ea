//! Server configuration file (TOML).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use airhmi_core::model::{HandFrame, InteractionBox};
use airhmi_core::pipeline::PipelineConfig;
use airhmi_core::protocol::LinkParams;
use airhmi_core::recognizer::RecognizerConfig;
use airhmi_core::stabilizer::{FilterParams, ScreenGeometry};
use airhmi_core::synth::{self, TrajectoryScript};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("frame source: {0}")]
    Source(String),
}

/// Where frames come from. Exactly one source feeds a server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Frames arrive as `frame` messages on `/feed`.
    Live {},
    /// A recorded JSONL frame file.
    Replay {
        path: PathBuf,
        #[serde(default = "default_true")]
        realtime: bool,
        #[serde(default)]
        wait_for_clients: usize,
    },
    /// A trajectory script rendered by the generator at startup.
    Synth {
        script: PathBuf,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_true")]
        realtime: bool,
        #[serde(default)]
        wait_for_clients: usize,
    },
}

fn default_true() -> bool {
    true
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Live {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueConfig {
    /// Per-client outbound queue length.
    pub capacity: usize,
    /// How many moves may wait in one client queue before older ones are
    /// coalesced away.
    pub move_budget: usize,
    /// Frames buffered between ingest and processing.
    pub ingest: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self { capacity: 256, move_budget: 8, ingest: 1024 }
    }
}

/// A window on the server clock during which the simulated link drops
/// everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageConfig {
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub source: SourceConfig,
    pub interaction_box: InteractionBox,
    pub filter: FilterParams,
    pub recognizer: RecognizerConfig,
    pub screen: ScreenGeometry,
    /// Impairment applied to every outbound client connection.
    pub link: Option<LinkParams>,
    pub link_outage: Option<OutageConfig>,
    /// Metrics JSON lines are appended here once per second.
    pub metrics_path: Option<PathBuf>,
    pub queue: QueueConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8765)),
            source: SourceConfig::Live {},
            interaction_box: InteractionBox::default(),
            filter: FilterParams::default(),
            recognizer: RecognizerConfig::default(),
            screen: ScreenGeometry::default(),
            link: None,
            link_outage: None,
            metrics_path: None,
            queue: QueueConfig::default(),
        }
    }
}

impl ServerConfig {
    /// Parses a TOML document. Relative source paths stay relative to the
    /// process working directory; [`ServerConfig::load`] rebases them.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.source {
            SourceConfig::Live {} => {}
            SourceConfig::Replay { path, .. } => rebase(path),
            SourceConfig::Synth { script, .. } => rebase(script),
        }
        if let Some(p) = &mut cfg.metrics_path {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.filter.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        ScreenGeometry::new(self.screen.width_px, self.screen.height_px)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(link) = &self.link {
            link.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(o) = &self.link_outage {
            if o.end_ms <= o.start_ms {
                return Err(ConfigError::Invalid("link_outage end_ms must be after start_ms".into()));
            }
        }
        if self.queue.capacity < 2 {
            return Err(ConfigError::Invalid("queue capacity must be at least 2".into()));
        }
        if self.queue.ingest == 0 {
            return Err(ConfigError::Invalid("ingest queue must be non-empty".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            interaction_box: self.interaction_box,
            recognizer: self.recognizer,
            filter: self.filter,
            screen: self.screen,
        }
    }

    /// Loads the frames for file-backed sources. `None` for a live source.
    pub fn load_frames(&self) -> Result<Option<Vec<HandFrame>>, ConfigError> {
        match &self.source {
            SourceConfig::Live {} => Ok(None),
            SourceConfig::Replay { path, .. } => synth::replay(path)
                .map(Some)
                .map_err(|e| ConfigError::Source(format!("{}: {e}", path.display()))),
            SourceConfig::Synth { script, seed, .. } => {
                let text = std::fs::read_to_string(script)
                    .map_err(|source| ConfigError::Io { path: script.clone(), source })?;
                let script_val =
                    TrajectoryScript::from_json(&text).map_err(|e| ConfigError::Source(e.to_string()))?;
                let stream = synth::generate_with(&script_val, *seed, self.recognizer, self.interaction_box)
                    .map_err(|e| ConfigError::Source(e.to_string()))?;
                Ok(Some(stream.frames))
            }
        }
    }

    /// `(realtime, wait_for_clients)` for file-backed sources.
    pub fn pacing(&self) -> (bool, usize) {
        match &self.source {
            SourceConfig::Live {} => (true, 0),
            SourceConfig::Replay { realtime, wait_for_clients, .. }
            | SourceConfig::Synth { realtime, wait_for_clients, .. } => (*realtime, *wait_for_clients),
        }
    }
}
