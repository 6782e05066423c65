//! Loopback mock of the next-token provider protocol. Runs the real HTTP
//! surface so the client path is exercised end to end without external
//! services.

use base64::Engine;
use serde::Deserialize;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::{FactorizedModel, ProbError, Result};

/// What the mock answers with.
#[derive(Clone)]
pub enum MockBehavior {
    /// Equal log-probability on every alphabet symbol.
    UniformLogits,
    /// All mass on one byte outside the alphabet (exercises the fallback).
    OutOfAlphabetOnly,
    /// Echo a factorized model's marginals. Log values are chosen so that
    /// `exp` reproduces each marginal bit-for-bit, which the equivalence
    /// harness relies on.
    EchoFm(FactorizedModel),
    /// Conditional distribution of a two-state Markov chain over symbols
    /// {0, 1}: stay with probability `p_stay`, flip otherwise.
    MarkovOracle { p_stay: f64 },
}

#[derive(Deserialize)]
struct NextTokenRequest {
    #[allow(dead_code)]
    prompt: String,
    context_bytes: String,
    alphabet_bits: u8,
}

pub struct MockLlmServer {
    url: String,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    requests: Arc<AtomicUsize>,
}

impl MockLlmServer {
    /// Bind on an ephemeral loopback port. `drop_first` connections are
    /// closed without a response (for retry tests).
    pub fn start(behavior: MockBehavior, drop_first: usize) -> Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let flag = Arc::clone(&shutdown);
        let counter = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let n = counter.fetch_add(1, Ordering::Relaxed);
                        if n < drop_first {
                            drop(stream);
                            continue;
                        }
                        let _ = handle_connection(stream, &behavior);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            url: format!("http://{addr}"),
            shutdown,
            handle: Some(handle),
            requests,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, behavior: &MockBehavior) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    stream.set_write_timeout(Some(Duration::from_secs(5)))?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let body_start;
    loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buf) {
            body_start = pos;
            break;
        }
        if buf.len() > 1 << 20 {
            return Ok(());
        }
    }
    let head = String::from_utf8_lossy(&buf[..body_start]).to_string();
    let content_length = head
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    while buf.len() < body_start + 4 + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body = &buf[body_start + 4..(body_start + 4 + content_length).min(buf.len())];

    let response = match serve(body, behavior) {
        Ok(json) => format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            json.len(),
            json
        ),
        Err(e) => {
            let msg = format!("{{\"error\":\"{e}\"}}");
            format!(
                "HTTP/1.1 400 Bad Request\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                msg.len(),
                msg
            )
        }
    };
    stream.write_all(response.as_bytes())
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn serve(body: &[u8], behavior: &MockBehavior) -> Result<String> {
    let req: NextTokenRequest = serde_json::from_slice(body)
        .map_err(|e| ProbError::Protocol(format!("bad request: {e}")))?;
    let context = base64::engine::general_purpose::STANDARD
        .decode(&req.context_bytes)
        .map_err(|e| ProbError::Protocol(format!("bad context_bytes: {e}")))?;
    let size = 1usize << req.alphabet_bits;

    let mut entries: Vec<(usize, f64)> = Vec::new();
    match behavior {
        MockBehavior::UniformLogits => {
            let lp = (1.0 / size as f64).ln();
            entries.extend((0..size).map(|s| (s, lp)));
        }
        MockBehavior::OutOfAlphabetOnly => {
            if size >= 256 {
                return Err(ProbError::Protocol("alphabet leaves no out-of-alphabet byte".into()));
            }
            entries.push((size, 0.0));
        }
        MockBehavior::EchoFm(fm) => {
            if fm.alphabet().size() != size {
                return Err(ProbError::Protocol("alphabet mismatch with echoed model".into()));
            }
            entries.extend(fm.pi().iter().enumerate().map(|(s, &p)| (s, exact_log(p))));
        }
        MockBehavior::MarkovOracle { p_stay } => {
            if size != 2 {
                return Err(ProbError::Protocol("markov oracle is defined for 1-bit alphabets".into()));
            }
            let p0 = match context.last() {
                None => 0.5,
                Some(0) => *p_stay,
                Some(_) => 1.0 - *p_stay,
            };
            entries.push((0, exact_log(p0)));
            entries.push((1, exact_log(1.0 - p0)));
        }
    }
    let map: serde_json::Map<String, serde_json::Value> = entries
        .into_iter()
        .map(|(s, lp)| (s.to_string(), serde_json::json!(lp)))
        .collect();
    Ok(serde_json::json!({ "logprobs": map }).to_string())
}

/// Log value whose `exp` lands as close to `p` as `exp`'s image allows —
/// exact when a preimage exists (always for p in [0.5, 1], where ulps of
/// ln(p) are finer than ulps of p), otherwise within a few ulps. The
/// coder's integer frequency quantization absorbs the residue.
pub fn exact_log(p: f64) -> f64 {
    let base = p.ln();
    let mut best = base;
    let mut best_diff = (base.exp() - p).abs();
    let mut up = base;
    let mut down = base;
    for _ in 0..6 {
        for c in [up, down] {
            let diff = (c.exp() - p).abs();
            if diff < best_diff {
                best = c;
                best_diff = diff;
            }
        }
        if best_diff == 0.0 {
            return best;
        }
        up = up.next_up();
        down = down.next_down();
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_log_hits_exactly_where_a_preimage_exists() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(0.5..1.0);
            assert_eq!(exact_log(p).exp().to_bits(), p.to_bits());
        }
    }

    #[test]
    fn exact_log_is_within_ulps_everywhere() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(1e-6..1.0);
            let back = exact_log(p).exp();
            assert!((back - p).abs() <= 16.0 * f64::EPSILON * p, "p={p} back={back}");
        }
    }
}
