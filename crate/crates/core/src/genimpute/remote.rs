//! HTTP client for an external fine-tuning / completion server.
//!
//! Routes (JSON bodies, UTF-8):
//!
//! - `POST /v1/finetune` `{"pairs": [{"prompt", "completion"}], "epochs", "adapter_rank", "seed"}` → `{"job_id"}`
//! - `GET /v1/finetune/<job_id>` → `{"status": "pending"|"running"|"done"|"failed", "detail"}`
//! - `POST /v1/complete` `{"prompt", "max_new_tokens", "temperature", "stop"}` → `{"text"}`

use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::prompt::PromptPair;
use super::GenerativeBackend;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePair {
    pub prompt: String,
    pub completion: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRequest {
    pub pairs: Vec<WirePair>,
    pub epochs: u32,
    pub adapter_rank: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneResponse {
    pub job_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub status: JobState,
    #[serde(default)]
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub stop: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub epochs: u32,
    pub adapter_rank: u32,
    pub seed: u64,
    /// Total attempts per request for transport failures and 5xx responses.
    pub attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub request_timeout: Duration,
    pub poll_interval: Duration,
    pub job_timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            epochs: 3,
            adapter_rank: 8,
            seed: 0,
            attempts: 3,
            backoff: Duration::from_millis(200),
            request_timeout: Duration::from_secs(60),
            poll_interval: Duration::from_millis(500),
            job_timeout: Duration::from_secs(3600),
        }
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.request_timeout))
            .build()
            .into();
        RemoteBackend { cfg, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.endpoint, path)
    }

    fn request<T: DeserializeOwned>(&self, path: &str, body: Option<&impl Serialize>) -> Result<T> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 0..self.cfg.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 1));
            }
            let sent = match body {
                Some(b) => self.agent.post(&url).send_json(b),
                None => self.agent.get(&url).call(),
            };
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = format!("{url}: {e}");
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::ProtocolError(format!("{url}: unreadable body: {e}")));
            if status >= 500 {
                last = format!("{url}: HTTP {status}: {}", text.unwrap_or_default());
                continue;
            }
            let text = text?;
            if status != 200 {
                return Err(Error::ProtocolError(format!(
                    "{url}: HTTP {status}: {text}"
                )));
            }
            return serde_json::from_str(&text).map_err(|e| {
                Error::ProtocolError(format!("{url}: malformed response `{text}`: {e}"))
            });
        }
        Err(Error::BackendUnavailable(last))
    }

    pub fn start_finetune(&self, pairs: &[PromptPair]) -> Result<String> {
        let req = FinetuneRequest {
            pairs: pairs
                .iter()
                .map(|p| WirePair {
                    prompt: p.prompt.clone(),
                    completion: p.completion.clone(),
                })
                .collect(),
            epochs: self.cfg.epochs,
            adapter_rank: self.cfg.adapter_rank,
            seed: self.cfg.seed,
        };
        let resp: FinetuneResponse = self.request("/v1/finetune", Some(&req))?;
        Ok(resp.job_id)
    }

    pub fn job_status(&self, job_id: &str) -> Result<JobStatus> {
        self.request::<JobStatus>(&format!("/v1/finetune/{job_id}"), None::<&()>)
    }

    /// Poll until the job is done; a failed job is a protocol error carrying
    /// the server's detail.
    pub fn wait_for(&self, job_id: &str) -> Result<()> {
        let start = Instant::now();
        loop {
            let st = self.job_status(job_id)?;
            match st.status {
                JobState::Done => return Ok(()),
                JobState::Failed => {
                    return Err(Error::ProtocolError(format!(
                        "fine-tune job {job_id} failed: {}",
                        st.detail
                    )))
                }
                JobState::Pending | JobState::Running => {}
            }
            if start.elapsed() > self.cfg.job_timeout {
                return Err(Error::BackendUnavailable(format!(
                    "fine-tune job {job_id} timed out"
                )));
            }
            thread::sleep(self.cfg.poll_interval);
        }
    }
}

impl GenerativeBackend for RemoteBackend {
    fn fit(&mut self, pairs: &[PromptPair]) -> Result<()> {
        let job = self.start_finetune(pairs)?;
        self.wait_for(&job)
    }

    fn generate(&self, prompt: &str, max_new_tokens: usize, temperature: f64) -> Result<String> {
        let req = CompleteRequest {
            prompt: prompt.to_string(),
            max_new_tokens,
            temperature,
            stop: vec!["\n".to_string()],
        };
        let resp: CompleteResponse = self.request("/v1/complete", Some(&req))?;
        Ok(resp.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_field_names() {
        let req = CompleteRequest {
            prompt: "p".into(),
            max_new_tokens: 8,
            temperature: 0.0,
            stop: vec!["\n".into()],
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"prompt":"p","max_new_tokens":8,"temperature":0.0,"stop":["\n"]}"#
        );
        let ft = FinetuneRequest {
            pairs: vec![WirePair {
                prompt: "a".into(),
                completion: "b".into(),
            }],
            epochs: 3,
            adapter_rank: 8,
            seed: 1,
        };
        assert_eq!(
            serde_json::to_string(&ft).unwrap(),
            r#"{"pairs":[{"prompt":"a","completion":"b"}],"epochs":3,"adapter_rank":8,"seed":1}"#
        );
        let st: JobStatus = serde_json::from_str(r#"{"status":"running","detail":"x"}"#).unwrap();
        assert_eq!(st.status, JobState::Running);
        assert!(serde_json::from_str::<JobStatus>(r#"{"status":"weird"}"#).is_err());
    }

    #[test]
    fn unreachable_endpoint() {
        let mut cfg = RemoteConfig::new("http://127.0.0.1:1");
        cfg.backoff = Duration::from_millis(1);
        let b = RemoteBackend::new(cfg);
        assert!(matches!(
            b.generate("x", 4, 0.0),
            Err(Error::BackendUnavailable(_))
        ));
    }
}
