use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{import_tuple_layout, parse_layout, LayoutError, SceneLayout, SYSTEM_PROMPT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    #[default]
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Chat-completions URL.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub mode: LlmMode,
    pub mock_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4".into(),
            api_key_env: None,
            temperature: 0.5,
            mode: LlmMode::Mock,
            mock_dir: None,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("layout client misconfigured: {0}")]
    Config(String),
    #[error("no mock layout for caption {caption:?} (expected {})", path.display())]
    MockNotFound { caption: String, path: PathBuf },
    #[error("mock layout {} is invalid: {source}", path.display())]
    MockInvalid {
        path: PathBuf,
        #[source]
        source: LayoutError,
    },
    #[error("i/o error reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("layout request failed: {0}")]
    Transport(String),
    #[error("layout response unusable after retry: {source}; raw response: {raw}")]
    Unparseable {
        raw: String,
        #[source]
        source: LayoutError,
    },
}

/// File name of the mock response for `caption`: first 16 hex digits of
/// its SHA-256, plus `.json`.
pub fn mock_file_name(caption: &str) -> String {
    let digest = Sha256::digest(caption.as_bytes());
    format!("{}.json", &hex::encode(digest)[..16])
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        match self.mode {
            LlmMode::Mock if self.mock_dir.is_none() => Err(LlmError::Config("mock mode needs mock_dir".into())),
            LlmMode::Live if self.endpoint.is_none() => Err(LlmError::Config("live mode needs an endpoint".into())),
            LlmMode::Live if self.api_key_env.is_none() => Err(LlmError::Config("live mode needs api_key_env".into())),
            _ => Ok(()),
        }
    }

    pub fn mock_path(&self, caption: &str) -> Option<PathBuf> {
        self.mock_dir.as_deref().map(|d| d.join(mock_file_name(caption)))
    }
}

/// Produces a layout for `caption`, from the mock directory or a live
/// chat-completions endpoint.
pub fn request_layout(cfg: &LlmConfig, caption: &str) -> Result<SceneLayout, LlmError> {
    cfg.validate()?;
    match cfg.mode {
        LlmMode::Mock => mock_layout(cfg.mock_dir.as_deref().expect("validated"), caption),
        LlmMode::Live => live_layout(cfg, caption),
    }
}

fn mock_layout(dir: &Path, caption: &str) -> Result<SceneLayout, LlmError> {
    let path = dir.join(mock_file_name(caption));
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(LlmError::MockNotFound {
                caption: caption.to_string(),
                path,
            })
        }
        Err(source) => return Err(LlmError::Io { path, source }),
    };
    parse_layout(&text).map_err(|source| LlmError::MockInvalid { path, source })
}

fn live_layout(cfg: &LlmConfig, caption: &str) -> Result<SceneLayout, LlmError> {
    let var = cfg.api_key_env.as_deref().expect("validated");
    let key = std::env::var(var)
        .ok()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| LlmError::Config(format!("environment variable {var} is not set")))?;
    let endpoint = cfg.endpoint.as_deref().expect("validated");
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
        .build()
        .into();
    let body = json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": format!("Caption: {caption}\nObjects:")},
        ],
    });

    let mut last = None;
    for _ in 0..2 {
        let raw = post(&agent, endpoint, &key, &body)?;
        match parse_completion(&raw, caption) {
            Ok(layout) => return Ok(layout),
            Err(source) => last = Some(LlmError::Unparseable { raw, source }),
        }
    }
    Err(last.expect("two attempts"))
}

fn post(agent: &ureq::Agent, endpoint: &str, key: &str, body: &Value) -> Result<String, LlmError> {
    let mut resp = agent
        .post(endpoint)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(body)
        .map_err(|e| LlmError::Transport(e.to_string()))?;
    resp.body_mut()
        .read_to_string()
        .map_err(|e| LlmError::Transport(e.to_string()))
}

/// Extracts the assistant message from a chat-completions response and
/// reads a layout from it: JSON when the content holds an object, the
/// tuple form otherwise. The requested caption always wins.
pub fn parse_completion(raw: &str, caption: &str) -> Result<SceneLayout, LayoutError> {
    let envelope: Value = serde_json::from_str(raw)?;
    let content = envelope
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LayoutError::Invalid {
            path: "choices[0].message.content".into(),
            reason: "missing from response".into(),
        })?;
    match (content.find('{'), content.rfind('}')) {
        (Some(a), Some(b)) if a < b => {
            let mut layout: SceneLayout = serde_json::from_str(&content[a..=b])?;
            layout.caption = caption.to_string();
            layout.check()?;
            Ok(layout)
        }
        _ => import_tuple_layout(content, Some(caption)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::fixtures;

    fn completion(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn mock_name_is_hash_prefix() {
        let name = mock_file_name("a chicken near a desk");
        assert_eq!(name.len(), 16 + 5);
        assert!(name[..16].chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(name, mock_file_name("a chicken near a desk."));
    }

    #[test]
    fn mock_hit_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let l = fixtures::chicken_desk();
        std::fs::write(dir.path().join(mock_file_name(&l.caption)), l.to_json()).unwrap();
        let cfg = LlmConfig {
            mock_dir: Some(dir.path().to_path_buf()),
            ..LlmConfig::default()
        };
        assert_eq!(request_layout(&cfg, &l.caption).unwrap(), l);
        assert!(matches!(
            request_layout(&cfg, "a cat on a mat"),
            Err(LlmError::MockNotFound { .. })
        ));
    }

    #[test]
    fn live_without_key_fails_before_network() {
        let cfg = LlmConfig {
            mode: LlmMode::Live,
            // Unroutable: any attempt to connect would surface as Transport.
            endpoint: Some("http://192.0.2.1:9/v1/chat/completions".into()),
            api_key_env: Some("BOXFIELD_TEST_KEY_THAT_IS_NEVER_SET".into()),
            ..LlmConfig::default()
        };
        assert!(matches!(request_layout(&cfg, "x"), Err(LlmError::Config(_))));
    }

    #[test]
    fn config_validation() {
        assert!(LlmConfig::default().validate().is_err());
        let live = LlmConfig {
            mode: LlmMode::Live,
            endpoint: Some("http://localhost".into()),
            ..LlmConfig::default()
        };
        assert!(live.validate().is_err());
    }

    #[test]
    fn completion_json_and_tuple_forms() {
        let l = fixtures::chicken_desk();
        let fenced = format!("```json\n{}```", l.to_json());
        assert_eq!(parse_completion(&completion(&fenced), &l.caption).unwrap(), l);
        let tuples =
            "Objects: [('a desk', [156, 106, 200, 200, 300, 150]), ('a chicken', [156, 436, 200, 150, 76, 112])]";
        assert_eq!(parse_completion(&completion(tuples), &l.caption).unwrap(), l);
        assert!(parse_completion(&completion("I cannot help"), "c").is_err());
        assert!(parse_completion("{}", "c").is_err());
    }
}
