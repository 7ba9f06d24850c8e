//! Byte-level HTTP exchange with the server.

use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    /// Path below the server root, query string included.
    pub path: String,
    pub bearer: Option<String>,
    pub body: Option<Vec<u8>>,
}

impl Request {
    /// Every byte this request puts on the wire above the transport layer.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = format!("{} {}\n", self.method.as_str(), self.path).into_bytes();
        if let Some(t) = &self.bearer {
            out.extend_from_slice(format!("authorization: Bearer {t}\n").as_bytes());
        }
        out.push(b'\n');
        if let Some(b) = &self.body {
            out.extend_from_slice(b);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait Transport: Send + Sync {
    /// `Err` only when no HTTP response was obtained.
    fn send(&self, req: &Request) -> Result<Response, String>;
}

/// Blocking HTTP client.
pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_owned(),
            agent: config.into(),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &Request) -> Result<Response, String> {
        let url = format!("{}{}", self.base, req.path);
        let auth = req.bearer.as_ref().map(|t| format!("Bearer {t}"));
        let result = match req.method {
            Method::Get => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("authorization", a);
                }
                r.call()
            }
            Method::Post => {
                let mut r = self
                    .agent
                    .post(&url)
                    .header("content-type", "application/json");
                if let Some(a) = &auth {
                    r = r.header("authorization", a);
                }
                r.send(req.body.as_deref().unwrap_or_default())
            }
        };
        let mut resp = result.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(64 << 20)
            .read_to_vec()
            .map_err(|e| e.to_string())?;
        Ok(Response { status, body })
    }
}

/// One recorded round trip.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub request: Request,
    pub response: Option<Response>,
}

/// Wraps another transport and keeps a copy of every exchange.
#[derive(Clone)]
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        RecordingTransport {
            inner,
            log: Arc::default(),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn outbound_bytes(&self) -> Vec<Vec<u8>> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .map(|e| e.request.wire_bytes())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl Transport for RecordingTransport {
    fn send(&self, req: &Request) -> Result<Response, String> {
        let result = self.inner.send(req);
        self.log.lock().unwrap().push(Exchange {
            request: req.clone(),
            response: result.as_ref().ok().cloned(),
        });
        result
    }
}
