//! Local HTTP server for fixtures: canned routes plus a species-API
//! emulation backed by a JSON taxonomy file.
//!
//! Used by the test suites and by `cargo run --example mock_server`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Request, Response, Server};

#[derive(Debug, Clone)]
pub enum MockResponse {
    Body {
        status: u16,
        content_type: String,
        body: Vec<u8>,
    },
    Redirect {
        status: u16,
        location: String,
    },
    Delayed(Duration, Box<MockResponse>),
    /// Each hit consumes the next entry; the last one repeats.
    Sequence(Vec<MockResponse>),
}

impl MockResponse {
    pub fn ok(content_type: &str, body: Vec<u8>) -> Self {
        MockResponse::Body {
            status: 200,
            content_type: content_type.to_string(),
            body,
        }
    }

    pub fn html(body: impl Into<String>) -> Self {
        Self::ok("text/html; charset=utf-8", body.into().into_bytes())
    }

    pub fn json(value: &serde_json::Value) -> Self {
        Self::ok("application/json", value.to_string().into_bytes())
    }

    pub fn status(status: u16) -> Self {
        MockResponse::Body {
            status,
            content_type: "text/plain".into(),
            body: format!("status {status}").into_bytes(),
        }
    }

    pub fn redirect(status: u16, location: &str) -> Self {
        MockResponse::Redirect {
            status,
            location: location.to_string(),
        }
    }

    pub fn delayed(delay: Duration, inner: MockResponse) -> Self {
        MockResponse::Delayed(delay, Box::new(inner))
    }

    pub fn sequence(items: Vec<MockResponse>) -> Self {
        MockResponse::Sequence(items)
    }
}

/// One node of a fixture taxonomy. Children of a node are the entries
/// whose `parentKey` names it, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixtureTaxon {
    pub key: u64,
    pub scientific_name: String,
    pub rank: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_key: Option<u64>,
    /// Per-source `extinct` flags for `/speciesProfiles`; `None` entries
    /// are sources without the field.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<Option<bool>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyFixture {
    pub taxa: Vec<FixtureTaxon>,
}

impl TaxonomyFixture {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn add(&mut self, key: u64, name: &str, rank: &str, parent: Option<u64>) -> &mut Self {
        self.taxa.push(FixtureTaxon {
            key,
            scientific_name: name.to_string(),
            rank: rank.to_string(),
            parent_key: parent,
            profiles: Vec::new(),
        });
        self
    }

    pub fn set_profiles(&mut self, key: u64, profiles: Vec<Option<bool>>) -> &mut Self {
        if let Some(t) = self.taxa.iter_mut().find(|t| t.key == key) {
            t.profiles = profiles;
        }
        self
    }

    fn record(t: &FixtureTaxon) -> serde_json::Value {
        let mut v = json!({
            "key": t.key,
            "scientificName": t.scientific_name,
            "canonicalName": t.scientific_name,
            "rank": t.rank,
        });
        if let Some(p) = t.parent_key {
            v["parentKey"] = json!(p);
        }
        v
    }

    /// Answers `{key}`, `{key}/children` and `{key}/speciesProfiles`
    /// relative to the API prefix.
    fn respond(&self, rest: &str, query: &HashMap<String, String>) -> Option<MockResponse> {
        let mut parts = rest.trim_matches('/').splitn(2, '/');
        let key: u64 = parts.next()?.parse().ok()?;
        let node = self.taxa.iter().find(|t| t.key == key)?;
        match parts.next() {
            None => Some(MockResponse::json(&Self::record(node))),
            Some("children") => {
                let children: Vec<&FixtureTaxon> = self
                    .taxa
                    .iter()
                    .filter(|t| t.parent_key == Some(key))
                    .collect();
                let limit: usize = query.get("limit").and_then(|v| v.parse().ok()).unwrap_or(20);
                let offset: usize = query.get("offset").and_then(|v| v.parse().ok()).unwrap_or(0);
                let page: Vec<serde_json::Value> = children
                    .iter()
                    .skip(offset)
                    .take(limit)
                    .map(|t| Self::record(t))
                    .collect();
                let end = offset.saturating_add(limit) >= children.len();
                Some(MockResponse::json(&json!({
                    "offset": offset,
                    "limit": limit,
                    "endOfRecords": end,
                    "count": children.len(),
                    "results": page,
                })))
            }
            Some("speciesProfiles") => {
                let results: Vec<serde_json::Value> = node
                    .profiles
                    .iter()
                    .map(|p| match p {
                        Some(b) => json!({ "extinct": b, "source": "fixture" }),
                        None => json!({ "source": "fixture" }),
                    })
                    .collect();
                Some(MockResponse::json(&json!({
                    "offset": 0,
                    "limit": results.len(),
                    "endOfRecords": true,
                    "results": results,
                })))
            }
            Some(_) => None,
        }
    }
}

#[derive(Default)]
struct MockState {
    routes: RwLock<HashMap<String, MockResponse>>,
    taxonomy: RwLock<Option<(String, TaxonomyFixture)>>,
    hits: Mutex<HashMap<String, usize>>,
    log: Mutex<Vec<String>>,
    user_agent: Mutex<Option<String>>,
    delay: RwLock<Duration>,
}

/// Background HTTP server bound to an ephemeral localhost port. Requests
/// are handled on their own threads so delayed responses do not block.
pub struct MockServer {
    server: Arc<Server>,
    base: String,
    state: Arc<MockState>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start() -> Self {
        Self::bind("127.0.0.1:0").expect("bind mock server")
    }

    pub fn bind(addr: &str) -> std::io::Result<Self> {
        let server = Arc::new(
            Server::http(addr).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?,
        );
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .unwrap_or_default();
        let base = format!("http://127.0.0.1:{port}");
        let state = Arc::new(MockState::default());
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(req)) => {
                            let state = Arc::clone(&state);
                            std::thread::spawn(move || handle(&state, req));
                        }
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })
        };
        Ok(MockServer {
            server,
            base,
            state,
            stop,
            thread: Some(thread),
        })
    }

    /// `http://127.0.0.1:<port>`
    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn url(&self, path_and_query: &str) -> String {
        format!("{}{}", self.base, path_and_query)
    }

    /// Registers a response for an exact path-and-query.
    pub fn route(&self, path_and_query: &str, response: MockResponse) {
        self.state
            .routes
            .write()
            .unwrap()
            .insert(path_and_query.to_string(), response);
    }

    /// Serves `fixture` under `prefix` (e.g. `/v1/species/`); returns the
    /// API base URL to put in a config.
    pub fn serve_taxonomy(&self, prefix: &str, fixture: TaxonomyFixture) -> String {
        *self.state.taxonomy.write().unwrap() = Some((prefix.to_string(), fixture));
        self.url(prefix)
    }

    /// Adds a fixed delay before every response.
    pub fn set_delay(&self, delay: Duration) {
        *self.state.delay.write().unwrap() = delay;
    }

    /// Number of requests seen for a path-and-query.
    pub fn hits(&self, path_and_query: &str) -> usize {
        self.state
            .hits
            .lock()
            .unwrap()
            .get(path_and_query)
            .copied()
            .unwrap_or(0)
    }

    pub fn request_log(&self) -> Vec<String> {
        self.state.log.lock().unwrap().clone()
    }

    pub fn last_user_agent(&self) -> Option<String> {
        self.state.user_agent.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn parse_query(q: &str) -> HashMap<String, String> {
    url::form_urlencoded::parse(q.as_bytes())
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect()
}

fn handle(state: &MockState, mut req: Request) {
    let target = req.url().to_string();
    {
        *state.hits.lock().unwrap().entry(target.clone()).or_insert(0) += 1;
        state.log.lock().unwrap().push(target.clone());
        let ua = req
            .headers()
            .iter()
            .find(|h| h.field.equiv("User-Agent"))
            .map(|h| h.value.as_str().to_string());
        *state.user_agent.lock().unwrap() = ua;
    }
    let mut sink = Vec::new();
    let _ = req.as_reader().read_to_end(&mut sink);

    let delay = *state.delay.read().unwrap();
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }

    let mut response = state.routes.read().unwrap().get(&target).cloned();
    if response.is_none() {
        let (path, query) = target.split_once('?').unwrap_or((target.as_str(), ""));
        if let Some((prefix, fixture)) = state.taxonomy.read().unwrap().as_ref() {
            if let Some(rest) = path.strip_prefix(prefix.as_str()) {
                response = fixture.respond(rest, &parse_query(query));
            }
        }
    }
    let mut response = response.unwrap_or_else(|| MockResponse::status(404));

    let hit = state.hits.lock().unwrap().get(&target).copied().unwrap_or(1);
    loop {
        match response {
            MockResponse::Sequence(items) if !items.is_empty() => {
                let idx = (hit - 1).min(items.len() - 1);
                response = items[idx].clone();
            }
            MockResponse::Sequence(_) => response = MockResponse::status(500),
            MockResponse::Delayed(d, inner) => {
                std::thread::sleep(d);
                response = *inner;
            }
            _ => break,
        }
    }

    let _ = match response {
        MockResponse::Body {
            status,
            content_type,
            body,
        } => req.respond(
            Response::from_data(body)
                .with_status_code(status)
                .with_header(header("Content-Type", &content_type)),
        ),
        MockResponse::Redirect { status, location } => req.respond(
            Response::empty(status).with_header(header("Location", &location)),
        ),
        MockResponse::Delayed(..) | MockResponse::Sequence(_) => unreachable!(),
    };
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}
