//! Completion backends: the remote chat-completions client with retry and
//! backoff, and the deterministic detector-backed mock.

use std::time::{Duration, Instant};

use serde::Deserialize;

use airshield_core::detector::DetectorModel;
use airshield_core::features::split_row;
use airshield_core::prompt_codec::{parse_record_text, CLASSIFY_INSTRUCTION};

use crate::{ApiKey, CompletionResult, GatewayConfig, TokenCounts, TransportStatus};

pub enum Backend {
    Remote(RemoteBackend),
    Mock(MockVerdictBackend),
}

impl Backend {
    /// Issues one completion: system message = instruction, user message =
    /// input. The remote path retries rate_limited/server_error per policy;
    /// the mock path is pure and instant.
    pub fn complete(&self, cfg: &GatewayConfig, instruction: &str, input: &str) -> CompletionResult {
        match self {
            Backend::Remote(remote) => remote.complete(cfg, instruction, input),
            Backend::Mock(mock) => mock.complete(instruction, input),
        }
    }
}

// --- remote ------------------------------------------------------------------

pub struct RemoteBackend {
    agent: ureq::Agent,
    api_key: ApiKey,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("api_key", &self.api_key)
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl RemoteBackend {
    /// Builds the HTTP client; the bearer token is read from
    /// `AIRSHIELD_API_KEY`.
    pub fn new(cfg: &GatewayConfig) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            api_key: ApiKey::from_env(),
        }
    }

    fn endpoint(cfg: &GatewayConfig) -> String {
        format!("{}/chat/completions", cfg.endpoint_url.trim_end_matches('/'))
    }

    fn attempt(
        &self,
        cfg: &GatewayConfig,
        instruction: &str,
        input: &str,
    ) -> (TransportStatus, Option<String>, Option<TokenCounts>) {
        let body = serde_json::json!({
            "model": cfg.model_name,
            "messages": [
                {"role": "system", "content": instruction},
                {"role": "user", "content": input},
            ],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        });
        let mut req = self
            .agent
            .post(Self::endpoint(cfg))
            .header("content-type", "application/json");
        if let Some(auth) = self.api_key.bearer_header() {
            req = req.header("authorization", auth);
        }
        let result = req.send(body.to_string());
        match result {
            Err(ureq::Error::Timeout(_)) => (TransportStatus::Timeout, None, None),
            Err(_) => (TransportStatus::ServerError, None, None),
            Ok(mut response) => {
                let code = response.status().as_u16();
                if code == 429 {
                    return (TransportStatus::RateLimited, None, None);
                }
                if code >= 500 {
                    return (TransportStatus::ServerError, None, None);
                }
                if !(200..300).contains(&code) {
                    return (TransportStatus::Malformed, None, None);
                }
                let text = match response.body_mut().read_to_string() {
                    Ok(t) => t,
                    Err(_) => return (TransportStatus::Malformed, None, None),
                };
                match serde_json::from_str::<ChatResponse>(&text) {
                    Ok(parsed) => {
                        let content = parsed
                            .choices
                            .first()
                            .and_then(|c| c.message.content.clone());
                        match content {
                            Some(content) => {
                                let tokens = parsed.usage.and_then(|u| {
                                    Some(TokenCounts {
                                        prompt: u.prompt_tokens?,
                                        completion: u.completion_tokens?,
                                    })
                                });
                                (TransportStatus::Ok, Some(content), tokens)
                            }
                            None => (TransportStatus::Malformed, None, None),
                        }
                    }
                    Err(_) => (TransportStatus::Malformed, None, None),
                }
            }
        }
    }

    pub fn complete(
        &self,
        cfg: &GatewayConfig,
        instruction: &str,
        input: &str,
    ) -> CompletionResult {
        let start = Instant::now();
        let mut attempt = 0u32;
        loop {
            let (status, text, tokens) = self.attempt(cfg, instruction, input);
            let retryable = matches!(
                status,
                TransportStatus::RateLimited | TransportStatus::ServerError
            );
            if retryable && attempt < cfg.retry.max_retries {
                let backoff = cfg.retry.backoff_base_seconds * 2f64.powi(attempt as i32);
                std::thread::sleep(Duration::from_secs_f64(backoff));
                attempt += 1;
                continue;
            }
            return match (status, text) {
                (TransportStatus::Ok, Some(t)) => {
                    CompletionResult::ok(t, start.elapsed(), tokens)
                }
                (s, _) => CompletionResult::failed(s, start.elapsed()),
            };
        }
    }
}

// --- mock --------------------------------------------------------------------

/// Canned refusal for inputs the renderer did not produce. Contains neither
/// verdict token, so it parses as Unparseable downstream.
pub const MOCK_REFUSAL: &str =
    "I am unable to read these values as a wireless network state record.";

/// Canned analysis for explainability prompts; stable for golden tests.
pub const MOCK_ANALYSIS: &str = "Mock analysis. The record values were compared against the \
detector's training distribution; deviations in distance, signal power and line of sight \
status carry most of the decision weight. No network call was made.";

/// Deterministic offline backend: parses the feature values back out of the
/// serialized input text, runs the detector, and answers exactly "(Benign)"
/// or "(Malicious)".
pub struct MockVerdictBackend {
    detector: DetectorModel,
}

impl MockVerdictBackend {
    pub fn new(detector: DetectorModel) -> Self {
        Self { detector }
    }

    pub fn complete(&self, instruction: &str, input: &str) -> CompletionResult {
        let text = if instruction == CLASSIFY_INSTRUCTION {
            match parse_record_text(input) {
                Some(row) => {
                    let (x, y) = split_row(&row);
                    match self.detector.classify(&x, y) {
                        Ok(c) if c.label == 1 => "(Malicious)".to_string(),
                        Ok(_) => "(Benign)".to_string(),
                        Err(_) => MOCK_REFUSAL.to_string(),
                    }
                }
                None => MOCK_REFUSAL.to_string(),
            }
        } else {
            MOCK_ANALYSIS.to_string()
        };
        // The mock performs no I/O; zero latency keeps offline transcripts
        // byte-stable.
        CompletionResult::ok(text, Duration::ZERO, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use airshield_core::adversary::LabeledSample;
    use airshield_core::detector::{train_detector, DetectorHyper, Featurizer};
    use airshield_core::features::assemble_row;
    use airshield_core::prompt_codec::{build_classify_prompt, parse_verdict, Verdict};

    fn toy_detector() -> DetectorModel {
        // Separable on the first coordinate of the canonical row.
        let mut train = Vec::new();
        for i in 0..40 {
            let base = i as f64 * 0.01;
            let mut x = vec![base; 11];
            x[0] = 100.0 + base;
            train.push(LabeledSample {
                x,
                y: 100.0,
                label: 1,
                source_index: i,
                applied_epsilon: 0.1,
            });
            let mut x = vec![base; 11];
            x[0] = -100.0 - base;
            train.push(LabeledSample {
                x,
                y: 100.0,
                label: 0,
                source_index: 40 + i,
                applied_epsilon: 0.0,
            });
        }
        train_detector(&train, &DetectorHyper::default(), Featurizer::Plain).unwrap()
    }

    #[test]
    fn mock_answers_match_detector_by_construction() {
        let detector = toy_detector();
        let mock = MockVerdictBackend::new(detector.clone());
        for x0 in [150.0, -150.0, 120.5, -99.5] {
            let mut x = vec![0.5; 11];
            x[0] = x0;
            let row = assemble_row(&x, 100.0);
            let prompt = build_classify_prompt(&row).unwrap();
            let result = mock.complete(&prompt.instruction, &prompt.input);
            let verdict = parse_verdict(result.text.as_deref().unwrap());
            // The detector sees exactly what the text round trip yields.
            let canon = airshield_core::prompt_codec::canonical_row(&row);
            let (cx, cy) = split_row(&canon);
            let expected = detector.classify(&cx, cy).unwrap().label;
            let expected = if expected == 1 { Verdict::Malicious } else { Verdict::Benign };
            assert_eq!(verdict, expected);
        }
    }

    #[test]
    fn garbage_input_yields_refusal_and_unparseable() {
        let mock = MockVerdictBackend::new(toy_detector());
        let result = mock.complete(CLASSIFY_INSTRUCTION, "not a record at all");
        let text = result.text.unwrap();
        assert_eq!(text, MOCK_REFUSAL);
        assert_eq!(parse_verdict(&text), Verdict::Unparseable);
    }

    #[test]
    fn mock_is_deterministic() {
        let mock = MockVerdictBackend::new(toy_detector());
        let row = assemble_row(&[1.0; 11], 50.0);
        let prompt = build_classify_prompt(&row).unwrap();
        let a = mock.complete(&prompt.instruction, &prompt.input);
        let b = mock.complete(&prompt.instruction, &prompt.input);
        assert_eq!(a.text, b.text);
        assert_eq!(a.latency, Duration::ZERO);
    }

    #[test]
    fn explain_prompts_get_canned_analysis() {
        let mock = MockVerdictBackend::new(toy_detector());
        let result = mock.complete("Why did you decide that?", "");
        assert_eq!(result.text.as_deref(), Some(MOCK_ANALYSIS));
        assert_eq!(parse_verdict(MOCK_ANALYSIS), Verdict::Unparseable);
    }
}
