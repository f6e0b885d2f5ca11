#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::Value;

use fastric_core::conformance::{canonical_script, Actor, ConformanceScore, ExecutionTrace, Turn};
use fastric_core::harness::{run_session, OracleAgent, SessionContext};
use fastric_core::protocol::{canonical_tutor_protocol, compile_protocol};
use fastric_core::render::{render_prompt, FormalityLevel};

pub const STUB_KEY_ENV: &str = "FASTRIC_STUB_KEY";
pub const STUB_KEY: &str = "stub-secret";

/// Request seen by the stub: parsed JSON body and the Authorization header.
pub struct StubRequest {
    pub body: Value,
    pub authorization: Option<String>,
}

type Handler = dyn Fn(&StubRequest, usize) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering every request through `handler`,
/// which also receives the zero-based request number.
pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> StubServer
    where
        F: Fn(&StubRequest, usize) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, s) = (hits.clone(), stop.clone());
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let n = h.fetch_add(1, Ordering::SeqCst);
                let _ = serve(stream, n, handler.as_ref());
            }
        });
        StubServer { url: format!("http://{addr}/v1"), hits, stop, addr, thread: Some(thread) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, n: usize, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, reply) = handler(&StubRequest { body, authorization }, n);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

/// Body of a successful chat completion carrying `text`.
pub fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

/// Number of assistant messages already in a request.
pub fn assistant_turns(req: &StubRequest) -> usize {
    req.body["messages"].as_array().map(|m| m.iter().filter(|x| x["role"] == "assistant").count()).unwrap_or(0)
}

/// Oracle session on the canonical script at `level`.
pub fn oracle_trace(level: FormalityLevel) -> ExecutionTrace {
    let protocol = canonical_tutor_protocol();
    let fsm = compile_protocol(&protocol).unwrap();
    let script = canonical_script();
    let prompt = render_prompt(&protocol, level).unwrap().text;
    let ctx = SessionContext { protocol: &protocol, fsm: &fsm, script: &script, level, prompt: &prompt };
    run_session(&OracleAgent, &ctx, "reference", 0).unwrap().trace
}

pub fn executor_texts(trace: &ExecutionTrace) -> Vec<String> {
    trace.turns.iter().filter(|t| t.actor == Actor::Executor).map(|t| t.text.clone()).collect()
}

/// Independent scorer for scripted runs: the oracle's transcript is the
/// reference, and a run is correct up to the first turn whose text or state
/// departs from it.
pub fn brute_force_score(trace: &[Turn], reference: &[Turn], total: u32) -> (u32, u32) {
    let first_diff =
        trace.iter().zip(reference).position(|(a, b)| a.text != b.text || a.state != b.state).unwrap_or(trace.len());
    (first_diff as u32, total)
}

pub fn score_pair(s: &ConformanceScore) -> (u32, u32) {
    (s.correct_turns, s.total_turns)
}
