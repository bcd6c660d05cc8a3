#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const SERVICE_DIM: usize = 768;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn synthetic_corpus() -> PathBuf {
    data_dir().join("synthetic_corpus.jsonl")
}

pub fn synthetic_config() -> PathBuf {
    data_dir().join("synthetic.toml")
}

pub fn core_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Deterministic stand-in for the encoder: every coordinate comes from a hash
/// of the text, pooling name and coordinate index.
pub fn fake_vector(text: &str, pooling: &str, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|i| {
            let h = Sha256::new()
                .chain_update(pooling.as_bytes())
                .chain_update([0])
                .chain_update(text.as_bytes())
                .chain_update((i as u32).to_le_bytes())
                .finalize();
            let x = u32::from_le_bytes([h[0], h[1], h[2], h[3]]);
            (x as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32
        })
        .collect()
}

/// Minimal HTTP/1.1 embedding service on a local port: `GET /health` and
/// `POST /embed`. Each response closes its connection.
pub struct FakeService {
    pub url: String,
    pub ready: Arc<AtomicBool>,
    pub embed_calls: Arc<AtomicUsize>,
    /// Width reported by `/health` and produced by `/embed`.
    pub dim: usize,
}

struct Request {
    method: String,
    path: String,
    body: Vec<u8>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut length = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Request { method, path, body })
}

fn respond(stream: &mut TcpStream, status: u16, body: &Value) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        503 => "Service Unavailable",
        _ => "Error",
    };
    let body = serde_json::to_vec(body).unwrap();
    let head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(&body);
}

fn handle(req: Request, ready: bool, dim: usize) -> (u16, Value) {
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") if ready => (200, json!({"status": "ok", "model": "fake-encoder@0", "dim": dim})),
        ("GET", "/health") => (503, json!({"status": "loading"})),
        ("POST", "/embed") if !ready => (503, json!({"error": "model loading"})),
        ("POST", "/embed") => {
            let Ok(v) = serde_json::from_slice::<Value>(&req.body) else {
                return (400, json!({"error": "invalid json"}));
            };
            let texts: Vec<String> = match v["texts"].as_array() {
                Some(a) if !a.is_empty() && a.len() <= 64 => {
                    a.iter().filter_map(|t| t.as_str().map(String::from)).collect()
                }
                _ => return (400, json!({"error": "texts must hold 1..=64 strings"})),
            };
            let pooling = v["pooling"].as_str().unwrap_or("first_last_avg").to_string();
            if !["cls", "mean", "first_last_avg"].contains(&pooling.as_str()) {
                return (400, json!({"error": "unknown pooling"}));
            }
            if v["max_length"].as_u64().is_some_and(|m| m == 0 || m > 512) {
                return (400, json!({"error": "max_length out of range"}));
            }
            let vectors: Vec<Vec<f32>> = texts.iter().map(|t| fake_vector(t, &pooling, dim)).collect();
            (200, json!({"vectors": vectors, "model": "fake-encoder@0", "pooling": pooling}))
        }
        _ => (404, json!({"error": "not found"})),
    }
}

impl FakeService {
    pub fn start(ready: bool) -> Self {
        Self::with_dim(ready, SERVICE_DIM)
    }

    pub fn with_dim(ready: bool, dim: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let ready = Arc::new(AtomicBool::new(ready));
        let embed_calls = Arc::new(AtomicUsize::new(0));
        let (r, calls) = (ready.clone(), embed_calls.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(req) = read_request(&mut stream) else { continue };
                if req.path == "/embed" {
                    calls.fetch_add(1, Ordering::SeqCst);
                }
                let (status, body) = handle(req, r.load(Ordering::SeqCst), dim);
                respond(&mut stream, status, &body);
            }
        });
        FakeService {
            url,
            ready,
            embed_calls,
            dim,
        }
    }

    pub fn set_ready(&self, ready: bool) {
        self.ready.store(ready, Ordering::SeqCst);
    }
}
