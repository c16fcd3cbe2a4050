use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{self, PROTOCOL_VERSION};
use super::{
    Backend, BackendDescriptor, BackendError, BackendResult, Capability, CorefProposal, Embedding,
    NliLogits,
};

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub timeout: Duration,
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff: Duration,
    pub auth_token: Option<String>,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(200),
            auth_token: None,
        }
    }
}

/// Client for the inference sidecar.
pub struct HttpBackend {
    base: String,
    agent: ureq::Agent,
    options: HttpOptions,
    descriptor: BackendDescriptor,
    observed: Mutex<BTreeMap<Capability, String>>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpBackend {
    /// Query `/health` and build the descriptor from the advertised catalog.
    pub fn connect(base_url: &str, options: HttpOptions) -> BackendResult<Self> {
        let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
        let mut backend = HttpBackend {
            base: base_url.trim_end_matches('/').to_owned(),
            agent,
            options,
            descriptor: BackendDescriptor {
                endpoint: base_url.to_owned(),
                models: BTreeMap::new(),
            },
            observed: Mutex::new(BTreeMap::new()),
        };
        let health: wire::HealthResponse = backend.call("GET", "/health", None::<&()>)?;
        if health.protocol_version != PROTOCOL_VERSION {
            return Err(BackendError::Protocol {
                endpoint: "/health".into(),
                message: format!(
                    "sidecar speaks protocol {}, client expects {PROTOCOL_VERSION}",
                    health.protocol_version
                ),
            });
        }
        backend.descriptor.models = health.capabilities;
        Ok(backend)
    }

    /// Model ids echoed by the sidecar so far, per capability.
    pub fn observed_models(&self) -> BTreeMap<Capability, String> {
        self.observed.lock().unwrap().clone()
    }

    fn record(&self, cap: Capability, model_id: &str) {
        self.observed
            .lock()
            .unwrap()
            .insert(cap, model_id.to_owned());
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(
        &self,
        method: &str,
        url: &str,
        body: Option<&B>,
    ) -> Result<R, Failure> {
        let mut req = self.agent.request(method, url);
        if let Some(token) = &self.options.auth_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match body {
            Some(b) => req.send_json(b),
            None => req.call(),
        };
        match resp {
            Ok(r) => r
                .into_json::<R>()
                .map_err(|e| Failure::Fatal(format!("undecodable response body: {e}"))),
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                let msg = format!("status {code}: {text}");
                if code >= 500 || code == 429 {
                    Err(Failure::Retryable(msg))
                } else {
                    Err(Failure::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Retryable(t.to_string())),
        }
    }

    fn call<B: Serialize, R: DeserializeOwned>(
        &self,
        method: &str,
        path: &str,
        body: Option<&B>,
    ) -> BackendResult<R> {
        let url = format!("{}{}", self.base, path);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(method, &url, body) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(message)) => {
                    return Err(BackendError::Protocol {
                        endpoint: path.to_owned(),
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    if attempts > self.options.retries {
                        return Err(BackendError::Transport {
                            endpoint: path.to_owned(),
                            attempts,
                            message,
                        });
                    }
                    let delay = self.options.backoff * 2u32.saturating_pow(attempts - 1);
                    thread::sleep(delay);
                }
            }
        }
    }

    fn require(&self, cap: Capability) -> BackendResult<()> {
        self.descriptor.require(&[cap])
    }

    fn check_len(path: &str, got: usize, want: usize) -> BackendResult<()> {
        if got == want {
            Ok(())
        } else {
            Err(BackendError::Protocol {
                endpoint: path.to_owned(),
                message: format!("expected {want} results, got {got}"),
            })
        }
    }

    fn texts(&self, cap: Capability, path: &str, texts: &[&str]) -> BackendResult<Vec<String>> {
        self.require(cap)?;
        let req = wire::TextsRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: wire::TextsResponse = self.call("POST", path, Some(&req))?;
        Self::check_len(path, resp.texts.len(), texts.len())?;
        self.record(cap, &resp.model_id);
        Ok(resp.texts)
    }

    fn single<T>(path: &str, mut v: Vec<T>) -> BackendResult<T> {
        Self::check_len(path, v.len(), 1)?;
        Ok(v.remove(0))
    }
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn nli_logits(&self, premise: &str, hypothesis: &str) -> BackendResult<NliLogits> {
        Self::single("/nli", self.nli_logits_batch(&[(premise, hypothesis)])?)
    }

    fn nli_logits_batch(&self, pairs: &[(&str, &str)]) -> BackendResult<Vec<NliLogits>> {
        self.require(Capability::NliLogits)?;
        let req = wire::NliRequest {
            pairs: pairs
                .iter()
                .map(|(p, h)| wire::TextPair {
                    premise: p.to_string(),
                    hypothesis: h.to_string(),
                })
                .collect(),
        };
        let resp: wire::NliResponse = self.call("POST", "/nli", Some(&req))?;
        Self::check_len("/nli", resp.logits.len(), pairs.len())?;
        self.record(Capability::NliLogits, &resp.model_id);
        let logits: Vec<NliLogits> = resp
            .logits
            .iter()
            .map(|z| NliLogits::new(z[0], z[1], z[2]))
            .collect();
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(BackendError::Protocol {
                endpoint: "/nli".into(),
                message: "non-finite logits".into(),
            });
        }
        Ok(logits)
    }

    fn embed(&self, text: &str) -> BackendResult<Embedding> {
        Self::single("/embed", self.embed_batch(&[text])?)
    }

    fn embed_batch(&self, texts: &[&str]) -> BackendResult<Vec<Embedding>> {
        self.require(Capability::Embed)?;
        let req = wire::TextsRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: wire::EmbedResponse = self.call("POST", "/embed", Some(&req))?;
        Self::check_len("/embed", resp.vectors.len(), texts.len())?;
        self.record(Capability::Embed, &resp.model_id);
        let dim = resp.vectors.first().map_or(0, Vec::len);
        if resp
            .vectors
            .iter()
            .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()))
        {
            return Err(BackendError::Protocol {
                endpoint: "/embed".into(),
                message: "ragged or non-finite vectors".into(),
            });
        }
        Ok(resp.vectors.into_iter().map(Embedding).collect())
    }

    fn punctuate(&self, turn: &str) -> BackendResult<String> {
        Self::single(
            "/punctuate",
            self.texts(Capability::Punctuate, "/punctuate", &[turn])?,
        )
    }

    fn truecase(&self, turn: &str) -> BackendResult<String> {
        Self::single(
            "/truecase",
            self.texts(Capability::Truecase, "/truecase", &[turn])?,
        )
    }

    fn coref_propose(&self, context: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>> {
        self.require(Capability::CorefPropose)?;
        let req = wire::CorefProposeRequest {
            context: context.to_vec(),
            claim: claim.to_owned(),
        };
        let resp: wire::CorefProposeResponse = self.call("POST", "/coref/propose", Some(&req))?;
        self.record(Capability::CorefPropose, &resp.model_id);
        Ok(resp
            .proposals
            .into_iter()
            .map(CorefProposal::from)
            .collect())
    }

    fn antecedent_select(
        &self,
        context: &[String],
        claim: &str,
        proposal: &CorefProposal,
    ) -> BackendResult<usize> {
        self.require(Capability::AntecedentSelect)?;
        let req = wire::CorefSelectRequest {
            context: context.to_vec(),
            claim: claim.to_owned(),
            proposal: proposal.into(),
        };
        let resp: wire::CorefSelectResponse = self.call("POST", "/coref/select", Some(&req))?;
        self.record(Capability::AntecedentSelect, &resp.model_id);
        Ok(resp.index)
    }

    fn decoder_rewrite(&self, context: &[String], claim: &str) -> BackendResult<String> {
        self.require(Capability::DecoderRewrite)?;
        let req = wire::RewriteRequest {
            context: context.to_vec(),
            claim: claim.to_owned(),
        };
        let resp: wire::RewriteResponse = self.call("POST", "/rewrite", Some(&req))?;
        self.record(Capability::DecoderRewrite, &resp.model_id);
        Ok(resp.text)
    }

    fn cross_encode(&self, query: &str, passage: &str) -> BackendResult<f64> {
        Self::single("/cross_encode", self.cross_encode_batch(query, &[passage])?)
    }

    fn cross_encode_batch(&self, query: &str, passages: &[&str]) -> BackendResult<Vec<f64>> {
        self.require(Capability::CrossEncode)?;
        let req = wire::CrossEncodeRequest {
            query: query.to_owned(),
            passages: passages.iter().map(|p| p.to_string()).collect(),
        };
        let resp: wire::CrossEncodeResponse = self.call("POST", "/cross_encode", Some(&req))?;
        Self::check_len("/cross_encode", resp.scores.len(), passages.len())?;
        self.record(Capability::CrossEncode, &resp.model_id);
        Ok(resp.scores)
    }
}
