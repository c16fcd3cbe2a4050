//! Layered settings: config file, then environment, then flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use claimgate::backends::{HttpOptions, StubScript};
use claimgate::eval::{SurfaceSelector, DEFAULT_DEPTHS};
use claimgate::gate::{GateConfig, GateWeights};
use claimgate::retrieval::{Bm25Params, CascadeConfig, ChunkParams};
use claimgate::Error;
use serde::{Deserialize, Serialize};

pub const ENV_URL: &str = "CLAIMGATE_BACKEND_URL";
pub const ENV_TOKEN: &str = "CLAIMGATE_BACKEND_TOKEN";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub url: Option<String>,
    pub token: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    /// Relative paths resolve against the config file's directory.
    pub stub_script: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub temperature: Option<f64>,
    pub sim_clamp: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub bm25_fetch: Option<usize>,
    pub bm25_keep: Option<usize>,
    pub dense: Option<bool>,
    pub dense_fetch: Option<usize>,
    pub dense_keep: Option<usize>,
    pub cross_encoder: Option<bool>,
    pub final_keep: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k_turns: Option<usize>,
    pub depths: Option<Vec<usize>>,
    pub surface: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tier: Option<Tier>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Deterministic stub backend only; network backends are refused.
    Offline,
    /// A real sidecar at the configured URL.
    Live,
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub surface: Option<SurfaceSelector>,
    pub k_turns: Option<usize>,
    pub tier: Option<Tier>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Stub {
        #[serde(skip_serializing_if = "Option::is_none")]
        script: Option<PathBuf>,
    },
    Http {
        url: String,
        #[serde(skip)]
        token: Option<String>,
        timeout_secs: u64,
        retries: u32,
    },
}

/// Fully resolved settings. Serialised into every run manifest (the token
/// is never written).
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub tier: Tier,
    pub backend: BackendChoice,
    pub gate: GateConfig,
    pub chunk: ChunkParams,
    pub bm25: Bm25Params,
    pub cascade: CascadeConfig,
    pub k_turns: usize,
    pub depths: Vec<usize>,
    pub surface: SurfaceSelector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concurrency: Option<usize>,
}

impl Settings {
    pub fn http_options(&self) -> Option<(String, HttpOptions)> {
        match &self.backend {
            BackendChoice::Http {
                url,
                token,
                timeout_secs,
                retries,
            } => Some((
                url.clone(),
                HttpOptions {
                    timeout: Duration::from_secs(*timeout_secs),
                    retries: *retries,
                    auth_token: token.clone(),
                    ..HttpOptions::default()
                },
            )),
            BackendChoice::Stub { .. } => None,
        }
    }

    pub fn stub_script(&self) -> Result<Option<StubScript>, Error> {
        match &self.backend {
            BackendChoice::Stub { script: Some(p) } => StubScript::from_path(p).map(Some),
            _ => Ok(None),
        }
    }
}

pub fn read_file_config(path: &Path) -> Result<FileConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn nonempty(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.trim().is_empty())
}

/// Merge file, environment and flags. `env` is a lookup so tests can pass
/// a fixed environment.
pub fn resolve(
    file: FileConfig,
    config_dir: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
    flags: &Overrides,
) -> Result<Settings, Error> {
    let url = nonempty(env(ENV_URL)).or(nonempty(file.backend.url));
    let token = nonempty(env(ENV_TOKEN)).or(nonempty(file.backend.token));
    let tier = flags.tier.or(file.run.tier).unwrap_or(Tier::Offline);

    let backend = match (tier, url) {
        (Tier::Offline, Some(url)) => {
            return Err(Error::Config(format!(
                "offline tier refuses network backend {url}; unset {ENV_URL} and backend.url or pass --tier live"
            )))
        }
        (Tier::Offline, None) => BackendChoice::Stub {
            script: file.backend.stub_script.map(|p| match config_dir {
                Some(d) if p.is_relative() => d.join(p),
                _ => p,
            }),
        },
        (Tier::Live, Some(url)) => BackendChoice::Http {
            url,
            token,
            timeout_secs: file.backend.timeout_secs.unwrap_or(60),
            retries: file.backend.retries.unwrap_or(3),
        },
        (Tier::Live, None) => {
            return Err(Error::Config(format!(
                "live tier needs a backend URL ({ENV_URL} or backend.url)"
            )))
        }
    };

    let d = GateConfig::default();
    let g = file.gate;
    let weights = match (g.alpha, g.beta, g.gamma) {
        (None, None, None) => d.weights,
        (a, b, c) => GateWeights::new(
            a.unwrap_or(d.weights.alpha),
            b.unwrap_or(d.weights.beta),
            c.unwrap_or(d.weights.gamma),
        )?,
    };
    let gate = GateConfig {
        weights,
        tau: flags.tau.or(g.tau).unwrap_or(d.tau),
        temperature: g.temperature.unwrap_or(d.temperature),
        sim_clamp: g.sim_clamp.unwrap_or(d.sim_clamp),
    };
    gate.validate()?;

    let r = file.retrieval;
    let dc = ChunkParams::default();
    let chunk = ChunkParams {
        window: r.window.unwrap_or(dc.window),
        stride: r.stride.unwrap_or(dc.stride),
    };
    chunk.validate()?;
    let db = Bm25Params::default();
    let bm25 = Bm25Params {
        k1: r.k1.unwrap_or(db.k1),
        b: r.b.unwrap_or(db.b),
    };
    bm25.validate()?;
    let dk = CascadeConfig::default();
    let cascade = CascadeConfig {
        bm25_fetch: r.bm25_fetch.unwrap_or(dk.bm25_fetch),
        bm25_keep: r.bm25_keep.unwrap_or(dk.bm25_keep),
        dense: r.dense.unwrap_or(dk.dense),
        dense_fetch: r.dense_fetch.unwrap_or(dk.dense_fetch),
        dense_keep: r.dense_keep.unwrap_or(dk.dense_keep),
        cross_encoder: r.cross_encoder.unwrap_or(dk.cross_encoder),
        final_keep: r.final_keep.unwrap_or(dk.final_keep),
    };
    cascade.validate()?;

    let surface = match flags.surface {
        Some(s) => s,
        None => match file.eval.surface {
            Some(s) => s.parse().map_err(Error::Config)?,
            None => "r0".parse().map_err(Error::Config)?,
        },
    };
    let depths = file.eval.depths.unwrap_or_else(|| DEFAULT_DEPTHS.to_vec());
    if depths.is_empty() || depths.contains(&0) {
        return Err(Error::Config("eval.depths must be positive".into()));
    }
    let concurrency = flags.concurrency.or(file.run.concurrency);
    if concurrency == Some(0) {
        return Err(Error::Config("concurrency must be at least 1".into()));
    }

    Ok(Settings {
        tier,
        backend,
        gate,
        chunk,
        bm25,
        cascade,
        k_turns: flags.k_turns.or(file.eval.k_turns).unwrap_or(2),
        depths,
        surface,
        concurrency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_are_offline_stub() {
        let s = resolve(FileConfig::default(), None, no_env, &Overrides::default()).unwrap();
        assert_eq!(s.tier, Tier::Offline);
        assert!(matches!(s.backend, BackendChoice::Stub { script: None }));
        assert_eq!(s.k_turns, 2);
        assert_eq!(s.gate.temperature, 4.96);
    }

    #[test]
    fn precedence_file_env_flags() {
        let file: FileConfig = toml::from_str(
            "[backend]\nurl = \"http://file\"\n[gate]\ntau = 0.3\n[eval]\nk_turns = 4\n[run]\ntier = \"live\"",
        )
        .unwrap();
        let env = |k: &str| (k == ENV_URL).then(|| "http://env".to_string());
        let flags = Overrides {
            tau: Some(0.7),
            ..Overrides::default()
        };
        let s = resolve(file, None, env, &flags).unwrap();
        assert_eq!(s.gate.tau, 0.7);
        assert_eq!(s.k_turns, 4);
        match s.backend {
            BackendChoice::Http { url, .. } => assert_eq!(url, "http://env"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offline_refuses_urls() {
        let env = |k: &str| (k == ENV_URL).then(|| "http://10.0.0.1:9".to_string());
        let err = resolve(FileConfig::default(), None, env, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("offline"));
    }

    #[test]
    fn token_is_not_serialised() {
        let env = |k: &str| match k {
            ENV_URL => Some("http://x".to_string()),
            ENV_TOKEN => Some("hunter2".to_string()),
            _ => None,
        };
        let flags = Overrides {
            tier: Some(Tier::Live),
            ..Overrides::default()
        };
        let s = resolve(FileConfig::default(), None, env, &flags).unwrap();
        assert!(!serde_json::to_string(&s).unwrap().contains("hunter2"));
        assert_eq!(
            s.http_options().unwrap().1.auth_token.as_deref(),
            Some("hunter2")
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[gate]\ntua = 0.5").is_err());
    }
}
