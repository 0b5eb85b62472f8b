//! Answer-quality judges.
//!
//! [`MockJudge`] is a deterministic lexical scorer for offline runs and
//! tests. [`HttpJudge`] talks to a chat-completion-style JSON endpoint.

use std::collections::HashMap;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde_json::{json, Value};
use thiserror::Error;

use crate::prompts;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("judge transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unparseable judge reply: {0}")]
    Unparseable(String),
}

/// Scores a predicted answer against the reference on a `[0, 1]` scale.
pub trait Judge: Send + Sync {
    fn score(&self, question: &str, predicted: &str, ground_truth: &str)
        -> Result<f64, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for std::sync::Arc<J> {
    fn score(
        &self,
        question: &str,
        predicted: &str,
        ground_truth: &str,
    ) -> Result<f64, JudgeError> {
        (**self).score(question, predicted, ground_truth)
    }
}

/// Token-level F1 between normalized answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

impl Judge for MockJudge {
    fn score(
        &self,
        _question: &str,
        predicted: &str,
        ground_truth: &str,
    ) -> Result<f64, JudgeError> {
        Ok(token_f1(predicted, ground_truth))
    }
}

fn normalize_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Multiset token F1. Two empty answers agree perfectly.
pub fn token_f1(predicted: &str, ground_truth: &str) -> f64 {
    let pred = normalize_tokens(predicted);
    let gold = normalize_tokens(ground_truth);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone)]
pub struct HttpJudgeConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    /// Prompt with `{question}`, `{prediction}` and `{ground_truth}` slots.
    pub template: String,
    pub max_attempts: u32,
    pub timeout: Duration,
}

impl HttpJudgeConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpJudgeConfig {
            endpoint: endpoint.into(),
            api_key: None,
            model: "judge".into(),
            template: prompts::JUDGE.to_owned(),
            max_attempts: 3,
            timeout: Duration::from_secs(60),
        }
    }
}

pub struct HttpJudge {
    cfg: HttpJudgeConfig,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(cfg: HttpJudgeConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        HttpJudge { cfg, agent }
    }

    fn request_once(&self, body: &Value) -> Result<Value, String> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| e.to_string())
    }
}

impl Judge for HttpJudge {
    fn score(
        &self,
        question: &str,
        predicted: &str,
        ground_truth: &str,
    ) -> Result<f64, JudgeError> {
        let prompt = prompts::render(
            &self.cfg.template,
            &[
                ("question", question),
                ("prediction", predicted),
                ("ground_truth", ground_truth),
            ],
        );
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.request_once(&body) {
                Ok(reply) => return parse_judge_reply(&reply),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "judge request failed");
                    last = e;
                }
            }
        }
        Err(JudgeError::Transport {
            attempts,
            message: last,
        })
    }
}

/// Pulls the first number out of `choices[0].message.content` and clamps
/// it to `[0, 1]`.
pub fn parse_judge_reply(reply: &Value) -> Result<f64, JudgeError> {
    let content = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| JudgeError::Unparseable(format!("no message content in {reply}")))?;
    first_number(content)
        .map(|v| v.clamp(0.0, 1.0))
        .ok_or_else(|| JudgeError::Unparseable(format!("no score in {content:?}")))
}

fn first_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = if i > 0 && bytes[i - 1] == b'-' {
                i - 1
            } else {
                i
            };
            let mut end = i;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            return s[start..end].parse().ok();
        }
        i += 1;
    }
    None
}

/// Admits at most `limit` concurrent calls to the wrapped judge; callers
/// beyond that wait for a slot.
pub struct LimitedJudge<J> {
    inner: J,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<J: Judge> LimitedJudge<J> {
    pub fn new(inner: J, limit: usize) -> Self {
        LimitedJudge {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<J: Judge> Judge for LimitedJudge<J> {
    fn score(
        &self,
        question: &str,
        predicted: &str,
        ground_truth: &str,
    ) -> Result<f64, JudgeError> {
        {
            let mut n = self.in_flight.lock();
            while *n >= self.limit {
                self.freed.wait(&mut n);
            }
            *n += 1;
        }
        let out = self.inner.score(question, predicted, ground_truth);
        *self.in_flight.lock() -= 1;
        self.freed.notify_one();
        out
    }
}
