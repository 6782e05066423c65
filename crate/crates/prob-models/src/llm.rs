//! External next-token provider: prompt construction and the JSON/HTTP
//! client. The protocol is one endpoint, `POST /v1/next_token`, taking
//! `{"prompt", "context_bytes" (base64), "alphabet_bits"}` and returning
//! `{"logprobs": {"<byte value>": <natural log prob>, ...}}`.

use base64::Engine;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use crate::provider::ProbabilityProvider;
use crate::{Alphabet, ProbError, Result};

/// Floor applied to vocabulary entries a provider omitted (top-k style
/// truncation); matches the coder's smallest representable frequency.
pub const LOGPROB_FLOOR: f64 = 1.0 / 65536.0;

/// Fixed one-line instruction handed to the provider.
pub fn build_prompt(alphabet: Alphabet, sequence_length: usize) -> String {
    format!(
        "You are a probability estimator, not a text generator. The data is a sequence of {} byte symbols, each in [0,{}]. Given the symbols so far, output the probability of each possible next symbol.",
        sequence_length,
        alphabet.size() - 1
    )
}

#[derive(Debug, Clone)]
pub struct LlmClientConfig {
    /// Base URL, e.g. `http://127.0.0.1:9130`.
    pub url: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl LlmClientConfig {
    pub fn new(url: &str) -> Self {
        Self { url: url.to_string(), timeout: Duration::from_secs(5), retries: 2 }
    }
}

pub struct LlmClient {
    cfg: LlmClientConfig,
    host: String,
}

#[derive(Deserialize)]
struct NextTokenResponse {
    logprobs: BTreeMap<String, f64>,
}

impl LlmClient {
    pub fn new(cfg: LlmClientConfig) -> Result<Self> {
        let host = cfg
            .url
            .strip_prefix("http://")
            .ok_or_else(|| ProbError::InvalidParameter(format!("unsupported url {}", cfg.url)))?
            .trim_end_matches('/')
            .to_string();
        if host.is_empty() {
            return Err(ProbError::InvalidParameter("empty provider host".into()));
        }
        Ok(Self { cfg, host })
    }

    /// One `POST /v1/next_token` round trip with retries on transport
    /// errors, mapped onto the alphabet.
    pub fn next_dist(&self, prompt: &str, prefix: &[u8], alphabet: Alphabet) -> Result<Vec<f64>> {
        let body = serde_json::json!({
            "prompt": prompt,
            "context_bytes": base64::engine::general_purpose::STANDARD.encode(prefix),
            "alphabet_bits": alphabet.n_bits(),
        })
        .to_string();

        let mut last_err = String::new();
        for _ in 0..=self.cfg.retries {
            match self.post(&body) {
                Ok(text) => {
                    let resp: NextTokenResponse = serde_json::from_str(&text)
                        .map_err(|e| ProbError::Protocol(format!("malformed response: {e}")))?;
                    return map_logprobs(&resp.logprobs, alphabet);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(ProbError::ProviderUnavailable(format!(
            "{} after {} retries: {last_err}",
            self.host, self.cfg.retries
        )))
    }

    fn post(&self, body: &str) -> std::io::Result<String> {
        let stream = TcpStream::connect(&self.host)?;
        stream.set_read_timeout(Some(self.cfg.timeout))?;
        stream.set_write_timeout(Some(self.cfg.timeout))?;
        let mut stream = stream;
        write!(
            stream,
            "POST /v1/next_token HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            self.host,
            body.len(),
            body
        )?;
        let mut raw = String::new();
        stream.read_to_string(&mut raw)?;
        let (head, payload) = raw
            .split_once("\r\n\r\n")
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no header terminator"))?;
        let status = head.lines().next().unwrap_or_default();
        if !status.contains(" 200 ") {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("status line: {status}"),
            ));
        }
        Ok(payload.to_string())
    }
}

/// Map provider log-probabilities onto the alphabet: out-of-alphabet mass
/// is folded back proportionally, omitted entries get [`LOGPROB_FLOOR`]
/// followed by renormalization, and an empty in-alphabet set falls back to
/// uniform.
pub fn map_logprobs(logprobs: &BTreeMap<String, f64>, alphabet: Alphabet) -> Result<Vec<f64>> {
    let size = alphabet.size();
    let mut p: Vec<Option<f64>> = vec![None; size];
    let mut in_mass = 0.0;
    let mut out_mass = 0.0;
    for (key, lp) in logprobs {
        let byte: u16 = key
            .parse()
            .map_err(|_| ProbError::Protocol(format!("non-byte logprob key {key:?}")))?;
        if byte > 255 {
            return Err(ProbError::Protocol(format!("logprob key {byte} above 255")));
        }
        let v = lp.exp();
        if !v.is_finite() {
            return Err(ProbError::Protocol(format!("logprob {lp} for key {key} overflows")));
        }
        if (byte as usize) < size {
            if p[byte as usize].replace(v).is_some() {
                return Err(ProbError::Protocol(format!("duplicate logprob key {key}")));
            }
            in_mass += v;
        } else {
            out_mass += v;
        }
    }
    if in_mass <= 0.0 {
        return Ok(vec![1.0 / size as f64; size]);
    }
    if out_mass > 0.0 {
        let scale = (in_mass + out_mass) / in_mass;
        for e in p.iter_mut().flatten() {
            *e *= scale;
        }
    }
    let missing = p.iter().any(Option::is_none);
    let mut dist: Vec<f64> = p.into_iter().map(|e| e.unwrap_or(LOGPROB_FLOOR)).collect();
    let sum: f64 = dist.iter().sum();
    if missing || (sum - 1.0).abs() > 1e-6 {
        for v in &mut dist {
            *v /= sum;
        }
    }
    Ok(dist)
}

/// [`ProbabilityProvider`] over the HTTP client; the decoder drives it
/// with the same prefixes as the encoder, so both sides see identical
/// responses from a deterministic provider.
pub struct LlmProvider {
    client: LlmClient,
    prompt: String,
    alphabet: Alphabet,
}

impl LlmProvider {
    pub fn new(cfg: LlmClientConfig, alphabet: Alphabet, sequence_length: usize) -> Result<Self> {
        Ok(Self {
            client: LlmClient::new(cfg)?,
            prompt: build_prompt(alphabet, sequence_length),
            alphabet,
        })
    }
}

impl ProbabilityProvider for LlmProvider {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn next_dist(&mut self, prefix: &[u8]) -> Result<Vec<f64>> {
        self.client.next_dist(&self.prompt, prefix, self.alphabet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_is_deterministic_and_bounded() {
        let a = Alphabet::new(7).unwrap();
        let p1 = build_prompt(a, 78);
        let p2 = build_prompt(a, 78);
        assert_eq!(p1, p2);
        assert!(p1.contains("78"));
        assert!(p1.contains("127"));
        assert!(p1.len() < 2048);
        assert!(!p1.contains('\n'));
    }

    #[test]
    fn uniform_logprobs_map_to_uniform() {
        let a = Alphabet::new(2).unwrap();
        let lp = (0..4).map(|i| (i.to_string(), (0.25f64).ln())).collect();
        let dist = map_logprobs(&lp, a).unwrap();
        for p in &dist {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_alphabet_mass_only_falls_back_to_uniform() {
        let a = Alphabet::new(2).unwrap();
        let lp = [("200".to_string(), 0.0f64)].into_iter().collect();
        let dist = map_logprobs(&lp, a).unwrap();
        assert_eq!(dist, vec![0.25; 4]);
    }

    #[test]
    fn missing_entries_are_floored_and_renormalized() {
        let a = Alphabet::new(2).unwrap();
        let lp = [("0".to_string(), (0.5f64).ln()), ("1".to_string(), (0.5f64).ln())]
            .into_iter()
            .collect();
        let dist = map_logprobs(&lp, a).unwrap();
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(dist[2] > 0.0 && dist[3] > 0.0);
        assert!(dist[0] > dist[2]);
    }

    #[test]
    fn out_of_alphabet_mass_is_redistributed_proportionally() {
        let a = Alphabet::new(1).unwrap();
        // 0.25 on each of the two alphabet symbols, 0.5 outside.
        let lp = [
            ("0".to_string(), (0.25f64).ln()),
            ("1".to_string(), (0.25f64).ln()),
            ("17".to_string(), (0.5f64).ln()),
        ]
        .into_iter()
        .collect();
        let dist = map_logprobs(&lp, a).unwrap();
        assert!((dist[0] - 0.5).abs() < 1e-12);
        assert!((dist[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_keys_are_protocol_errors() {
        let a = Alphabet::new(2).unwrap();
        let lp = [("abc".to_string(), 0.0f64)].into_iter().collect();
        assert!(matches!(map_logprobs(&lp, a), Err(ProbError::Protocol(_))));
        let lp = [("300".to_string(), 0.0f64)].into_iter().collect();
        assert!(matches!(map_logprobs(&lp, a), Err(ProbError::Protocol(_))));
    }
}
