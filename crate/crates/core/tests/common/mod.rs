#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

pub mod oracle;
pub mod toy;

use mobsim::endpoint::EndpointConfig;
use serde_json::json;

/// Reply of the mock endpoint: HTTP status and raw body.
pub type Reply = (u16, String);

/// Local chat-completion stand-in. `script(n, body)` answers the `n`-th
/// request (counting from 0).
pub struct MockEndpoint {
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    pub url: String,
}

impl MockEndpoint {
    pub fn start<F>(script: F) -> Self
    where
        F: Fn(usize, &str) -> Reply + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let (s, h, b) = (server.clone(), hits.clone(), bodies.clone());
        let handle = std::thread::spawn(move || {
            for mut req in s.incoming_requests() {
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let n = h.fetch_add(1, Ordering::SeqCst);
                let (code, text) = script(n, &body);
                b.lock().unwrap().push(body);
                let resp = tiny_http::Response::from_string(text).with_status_code(code);
                let _ = req.respond(resp);
            }
        });
        MockEndpoint {
            server,
            handle: Some(handle),
            hits,
            bodies,
            url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn config(&self, retries: u32) -> EndpointConfig {
        EndpointConfig {
            url: self.url.clone(),
            token: Some("test-token".into()),
            model: "mock".into(),
            max_in_flight: 2,
            retries,
            timeout_secs: 5.0,
            backoff_ms: 1,
        }
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// OpenAI-style reply wrapping `content`.
pub fn chat_reply(content: &str) -> Reply {
    let body = json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    (200, body.to_string())
}

/// A valid two-day stay array: home at night, one outing per day.
pub fn stays_content(home: (u32, u32)) -> String {
    let (hx, hy) = home;
    let mut v = Vec::new();
    for day in 0..2u32 {
        v.push(json!({"day": day, "start_slot": 0, "duration_slots": 16, "cell_x": hx, "cell_y": hy}));
        v.push(json!({"day": day, "start_slot": 16, "duration_slots": 18, "cell_x": hx + 3, "cell_y": hy + 1}));
        v.push(json!({"day": day, "start_slot": 34, "duration_slots": 14, "cell_x": hx, "cell_y": hy}));
    }
    serde_json::Value::Array(v).to_string()
}

/// Home cell announced in a generator request body.
pub fn home_in_request(body: &str) -> (u32, u32) {
    let v: serde_json::Value = serde_json::from_str(body).expect("json request");
    let user = v["messages"][1]["content"].as_str().expect("user message");
    let rest = &user[user.find("Home cell: (").expect("home line") + 12..];
    let inner = &rest[..rest.find(')').expect("closing paren")];
    let mut it = inner.split(',').map(|s| s.trim().parse::<u32>().expect("cell coordinate"));
    (it.next().unwrap(), it.next().unwrap())
}
