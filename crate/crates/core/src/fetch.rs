//! Blocking HTTP GET with explicit redirect following and 5xx/timeout retry.

use std::io::{self, Read};
use std::time::Duration;

use log::{debug, warn};
use thiserror::Error;
use url::Url;

use crate::config::HttpPolicy;

pub const USER_AGENT: &str = "taxoforge/1.0";

/// Bodies larger than this are refused.
const MAX_BODY_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid URL `{0}`")]
    BadUrl(String),
    #[error("more than {0} redirects")]
    TooManyRedirects(u32),
    #[error("redirect without usable Location header from {0}")]
    BadRedirect(String),
    #[error("HTTP status {status} from {url}")]
    Http { status: u16, url: String },
    #[error("timed out fetching {0}")]
    Timeout(String),
    #[error("transport error fetching {url}: {detail}")]
    Transport { url: String, detail: String },
    #[error("body of {0} exceeds size limit")]
    TooLarge(String),
}

impl FetchError {
    pub fn status(&self) -> Option<u16> {
        match self {
            FetchError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Outcome of a single request, before retry/redirect policy is applied.
enum Attempt {
    Body(Vec<u8>),
    Redirect(String),
    Status(u16),
    Timeout,
    Transport(String),
}

/// Shareable client; one agent (connection pool) for all workers.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    policy: HttpPolicy,
}

impl HttpClient {
    pub fn new(policy: HttpPolicy) -> Self {
        let timeout = Duration::from_millis(policy.timeout_ms.max(1));
        let agent = ureq::AgentBuilder::new()
            .redirects(0)
            .timeout(timeout)
            .user_agent(USER_AGENT)
            .build();
        HttpClient { agent, policy }
    }

    pub fn policy(&self) -> &HttpPolicy {
        &self.policy
    }

    /// GET `url`, following 3xx `Location` headers up to `max_redirects`
    /// hops. Each hop is tried at most `1 + retries_5xx` times; only 5xx
    /// responses and timeouts are retried.
    pub fn get(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        let mut current = Url::parse(url).map_err(|_| FetchError::BadUrl(url.to_string()))?;
        let mut hops = 0u32;
        loop {
            match self.get_hop(&current)? {
                HopResult::Body(body) => return Ok(body),
                HopResult::Redirect(location) => {
                    if hops >= self.policy.max_redirects {
                        return Err(FetchError::TooManyRedirects(self.policy.max_redirects));
                    }
                    hops += 1;
                    let next = current
                        .join(&location)
                        .map_err(|_| FetchError::BadRedirect(current.to_string()))?;
                    debug!("redirect {} -> {}", current, next);
                    current = next;
                }
            }
        }
    }

    pub fn get_json<T: serde::de::DeserializeOwned>(&self, url: &str) -> Result<T, JsonFetchError> {
        let body = self.get(url)?;
        serde_json::from_slice(&body).map_err(|e| JsonFetchError::Decode {
            url: url.to_string(),
            detail: e.to_string(),
        })
    }

    fn get_hop(&self, url: &Url) -> Result<HopResult, FetchError> {
        let mut attempt = 0u32;
        loop {
            let outcome = self.attempt(url);
            let retryable = match &outcome {
                Attempt::Body(_) | Attempt::Redirect(_) => false,
                Attempt::Status(s) => *s >= 500,
                Attempt::Timeout => true,
                Attempt::Transport(_) => false,
            };
            if retryable && attempt < self.policy.retries_5xx {
                let delay = self
                    .policy
                    .backoff_base_ms
                    .saturating_mul(1u64 << attempt.min(20));
                warn!("retrying {} in {} ms (attempt {})", url, delay, attempt + 1);
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
                continue;
            }
            return match outcome {
                Attempt::Body(b) => Ok(HopResult::Body(b)),
                Attempt::Redirect(l) => Ok(HopResult::Redirect(l)),
                Attempt::Status(status) => Err(FetchError::Http {
                    status,
                    url: url.to_string(),
                }),
                Attempt::Timeout => Err(FetchError::Timeout(url.to_string())),
                Attempt::Transport(detail) => Err(FetchError::Transport {
                    url: url.to_string(),
                    detail,
                }),
            };
        }
    }

    fn attempt(&self, url: &Url) -> Attempt {
        let response = match self.agent.request_url("GET", url).call() {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => return Attempt::Status(code),
            Err(ureq::Error::Transport(t)) => {
                return if is_timeout(&t) {
                    Attempt::Timeout
                } else {
                    Attempt::Transport(t.to_string())
                };
            }
        };
        let status = response.status();
        if (300..400).contains(&status) {
            return match response.header("location") {
                Some(l) if matches!(status, 301 | 302 | 303 | 307 | 308) => {
                    Attempt::Redirect(l.to_string())
                }
                _ => Attempt::Status(status),
            };
        }
        if !(200..300).contains(&status) {
            return Attempt::Status(status);
        }
        let mut body = Vec::new();
        match response
            .into_reader()
            .take(MAX_BODY_BYTES + 1)
            .read_to_end(&mut body)
        {
            Ok(_) if body.len() as u64 > MAX_BODY_BYTES => {
                Attempt::Transport(FetchError::TooLarge(url.to_string()).to_string())
            }
            Ok(_) => Attempt::Body(body),
            Err(e) if is_timeout_io(&e) => Attempt::Timeout,
            Err(e) => Attempt::Transport(e.to_string()),
        }
    }
}

enum HopResult {
    Body(Vec<u8>),
    Redirect(String),
}

fn is_timeout_io(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(t);
    while let Some(err) = source {
        if let Some(io_err) = err.downcast_ref::<io::Error>() {
            if is_timeout_io(io_err) {
                return true;
            }
        }
        source = err.source();
    }
    t.to_string().contains("timed out")
}

#[derive(Debug, Error)]
pub enum JsonFetchError {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("cannot decode JSON from {url}: {detail}")]
    Decode { url: String, detail: String },
}

/// One-shot download with a fresh client.
pub fn download(url: &str, policy: &HttpPolicy) -> Result<Vec<u8>, FetchError> {
    HttpClient::new(policy.clone()).get(url)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{MockResponse, MockServer};

    fn fast_policy() -> HttpPolicy {
        HttpPolicy {
            max_redirects: 5,
            retries_5xx: 3,
            backoff_base_ms: 1,
            timeout_ms: 2_000,
        }
    }

    #[test]
    fn plain_body() {
        let server = MockServer::start();
        server.route("/x", MockResponse::ok("text/plain", b"x".to_vec()));
        assert_eq!(download(&server.url("/x"), &fast_policy()).unwrap(), b"x");
        assert_eq!(server.hits("/x"), 1);
    }

    #[test]
    fn follows_301_then_200() {
        let server = MockServer::start();
        server.route("/old", MockResponse::redirect(301, "/mid"));
        server.route("/mid", MockResponse::redirect(302, "/new"));
        server.route("/new", MockResponse::ok("text/plain", b"final".to_vec()));
        assert_eq!(download(&server.url("/old"), &fast_policy()).unwrap(), b"final");
    }

    #[test]
    fn not_found_is_not_retried() {
        let server = MockServer::start();
        let err = download(&server.url("/missing"), &fast_policy()).unwrap_err();
        assert_eq!(err.status(), Some(404));
        assert_eq!(server.hits("/missing"), 1);
    }

    #[test]
    fn server_error_retried_then_fails() {
        let server = MockServer::start();
        server.route("/flaky", MockResponse::status(503));
        let err = download(&server.url("/flaky"), &fast_policy()).unwrap_err();
        assert_eq!(err.status(), Some(503));
        assert_eq!(server.hits("/flaky"), 4);
    }

    #[test]
    fn server_error_recovers() {
        let server = MockServer::start();
        server.route(
            "/flaky",
            MockResponse::sequence(vec![
                MockResponse::status(500),
                MockResponse::status(502),
                MockResponse::ok("text/plain", b"ok".to_vec()),
            ]),
        );
        assert_eq!(download(&server.url("/flaky"), &fast_policy()).unwrap(), b"ok");
        assert_eq!(server.hits("/flaky"), 3);
    }

    #[test]
    fn redirect_loop_stops() {
        let server = MockServer::start();
        server.route("/a", MockResponse::redirect(301, "/b"));
        server.route("/b", MockResponse::redirect(301, "/a"));
        let policy = HttpPolicy {
            max_redirects: 3,
            ..fast_policy()
        };
        let err = download(&server.url("/a"), &policy).unwrap_err();
        assert!(matches!(err, FetchError::TooManyRedirects(3)));
        assert_eq!(server.hits("/a") + server.hits("/b"), 4);
    }

    #[test]
    fn timeout_retried() {
        let server = MockServer::start();
        server.route(
            "/slow",
            MockResponse::delayed(Duration::from_millis(600), MockResponse::ok("text/plain", b"late".to_vec())),
        );
        let policy = HttpPolicy {
            retries_5xx: 1,
            timeout_ms: 150,
            ..fast_policy()
        };
        let err = download(&server.url("/slow"), &policy).unwrap_err();
        assert!(matches!(err, FetchError::Timeout(_)), "{err:?}");
        assert_eq!(server.hits("/slow"), 2);
    }

    #[test]
    fn sends_user_agent() {
        let server = MockServer::start();
        server.route("/ua", MockResponse::ok("text/plain", b"".to_vec()));
        download(&server.url("/ua"), &fast_policy()).unwrap();
        assert_eq!(server.last_user_agent().as_deref(), Some(USER_AGENT));
    }
}
