use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revbridge_core::bridge::{
    BridgeReceiver, BridgeRequest, BridgeResponse, Courier, Loopback, RetryPolicy, Transport,
    TransportFailure,
};
use revbridge_core::clock::{Clock, ScriptedClock};
use revbridge_core::docs::DocService;
use revbridge_core::ids::IdGenerator;
use revbridge_core::review::{ReviewConfig, ReviewService};
use revbridge_http::{doc_router, review_router, DocApp, ReviewApp};
use serde_json::Value;
use tower::ServiceExt;

use crate::script::{Fault, FaultSpec};
use crate::HarnessError;

pub const SHARED_SECRET: &str = "revbridge-harness-secret";
pub const DOC_BASE_URL: &str = "http://doc.local";

/// One service seen through its HTTP API.
pub trait Api {
    fn call(
        &self,
        method: &str,
        path: &str,
        bearer: Option<&str>,
        body: Option<Vec<u8>>,
    ) -> Result<(u16, Value), HarnessError>;
}

/// Requests dispatched straight into a router, no sockets involved.
pub struct InProcessApi {
    router: Router,
    runtime: Arc<tokio::runtime::Runtime>,
}

impl Api for InProcessApi {
    fn call(
        &self,
        method: &str,
        path: &str,
        bearer: Option<&str>,
        body: Option<Vec<u8>>,
    ) -> Result<(u16, Value), HarnessError> {
        let mut request = Request::builder().method(method).uri(path);
        if let Some(token) = bearer {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        if body.is_some() {
            request = request.header("content-type", "application/json");
        }
        let request = request
            .body(Body::from(body.unwrap_or_default()))
            .map_err(|e| HarnessError::Internal(e.to_string()))?;
        let router = self.router.clone();
        self.runtime.block_on(async move {
            let response = router
                .oneshot(request)
                .await
                .map_err(|e| HarnessError::Internal(e.to_string()))?;
            let status = response.status().as_u16();
            let bytes = axum::body::to_bytes(response.into_body(), usize::MAX)
                .await
                .map_err(|e| HarnessError::Internal(e.to_string()))?;
            Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
        })
    }
}

/// Requests sent to a running service.
pub struct LiveApi {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl LiveApi {
    pub fn new(base_url: &str) -> Result<Self, HarnessError> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .map_err(|e| HarnessError::Internal(e.to_string()))?,
        })
    }
}

impl Api for LiveApi {
    fn call(
        &self,
        method: &str,
        path: &str,
        bearer: Option<&str>,
        body: Option<Vec<u8>>,
    ) -> Result<(u16, Value), HarnessError> {
        let url = format!("{}{path}", self.base_url);
        let mut request = match method {
            "GET" => self.client.get(&url),
            _ => self.client.post(&url),
        };
        if let Some(token) = bearer {
            request = request.bearer_auth(token);
        }
        if let Some(body) = body {
            request = request.header("content-type", "application/json").body(body);
        }
        let response = request
            .send()
            .map_err(|e| HarnessError::EndpointUnreachable(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        let bytes = response
            .bytes()
            .map_err(|e| HarnessError::EndpointUnreachable(format!("{url}: {e}")))?;
        Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
    }
}

/// Applies a fault schedule at the bridge seam. The runner tells it which
/// step is executing.
pub struct FaultInjector {
    inner: Arc<dyn Transport>,
    schedule: Arc<FaultBook>,
}

pub struct FaultBook {
    faults: BTreeMap<usize, Vec<Fault>>,
    step: Mutex<Option<usize>>,
    dropped: Mutex<BTreeSet<usize>>,
    rng: Mutex<ChaCha8Rng>,
    clock: Arc<ScriptedClock>,
    applied: Mutex<Vec<String>>,
}

impl FaultBook {
    fn new(faults: &[FaultSpec], seed: u64, clock: Arc<ScriptedClock>) -> Self {
        let mut by_step: BTreeMap<usize, Vec<Fault>> = BTreeMap::new();
        for f in faults {
            by_step.entry(f.step).or_default().push(f.fault);
        }
        Self {
            faults: by_step,
            step: Mutex::new(None),
            dropped: Mutex::new(BTreeSet::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fa17)),
            clock,
            applied: Mutex::new(Vec::new()),
        }
    }

    pub fn enter_step(&self, step: Option<usize>) {
        *self.step.lock() = step;
    }

    /// Human-readable record of the faults that actually fired.
    pub fn applied(&self) -> Vec<String> {
        self.applied.lock().clone()
    }
}

impl Transport for FaultInjector {
    fn send(&self, request: &BridgeRequest) -> Result<BridgeResponse, TransportFailure> {
        let book = &self.schedule;
        let Some(step) = *book.step.lock() else {
            return self.inner.send(request);
        };
        let faults = book.faults.get(&step).cloned().unwrap_or_default();
        let path = request.endpoint.path();
        let mut duplicate = false;
        let mut drop = false;
        for fault in faults {
            match fault {
                Fault::Delay(ms) => {
                    book.clock.advance(Duration::from_millis(ms));
                    book.applied.lock().push(format!("step {step}: delay {ms}ms {path}"));
                }
                Fault::Duplicate => duplicate = true,
                Fault::DropOnce => drop = book.dropped.lock().insert(step),
            }
        }
        if drop {
            let lose_response = book.rng.lock().random::<bool>();
            if lose_response {
                let _ = self.inner.send(request);
            }
            let which = if lose_response { "response" } else { "request" };
            book.applied.lock().push(format!("step {step}: dropped {which} {path}"));
            return Err(TransportFailure(format!("injected loss of the {which}")));
        }
        if duplicate {
            book.applied.lock().push(format!("step {step}: duplicated {path}"));
            let _ = self.inner.send(request);
        }
        self.inner.send(request)
    }
}

/// The two services a scenario runs against.
pub struct Deployment {
    pub doc: Box<dyn Api>,
    pub review: Box<dyn Api>,
    pub in_process: Option<InProcess>,
}

/// Direct handles on in-process services, for checks the HTTP API does not
/// expose.
pub struct InProcess {
    pub doc: Arc<DocService>,
    pub review: Arc<ReviewService>,
    pub clock: Arc<ScriptedClock>,
    pub faults: Arc<FaultBook>,
}

impl Deployment {
    /// Boots both services in this process on a scripted clock, with ids
    /// drawn from `seed` and `faults` applied to every bridge delivery.
    pub fn in_process(seed: u64, faults: &[FaultSpec]) -> Result<Self, HarnessError> {
        let clock = Arc::new(ScriptedClock::default());
        let dyn_clock: Arc<dyn Clock> = clock.clone();
        let doc = Arc::new(DocService::new(
            SHARED_SECRET,
            dyn_clock.clone(),
            IdGenerator::seeded(seed.wrapping_mul(2).wrapping_add(1)),
        )?);
        let review = Arc::new(ReviewService::new(
            SHARED_SECRET,
            dyn_clock.clone(),
            IdGenerator::seeded(seed.wrapping_mul(2).wrapping_add(2)),
            ReviewConfig {
                doc_base_url: DOC_BASE_URL.into(),
                ..ReviewConfig::default()
            },
        )?);
        let book = Arc::new(FaultBook::new(faults, seed, clock.clone()));
        let doc_rx: Arc<dyn BridgeReceiver> = doc.clone();
        let review_rx: Arc<dyn BridgeReceiver> = review.clone();
        let courier = |peer: &Arc<dyn BridgeReceiver>| {
            let transport = FaultInjector {
                inner: Arc::new(Loopback::new(peer)),
                schedule: book.clone(),
            };
            Courier::new(
                SHARED_SECRET,
                Arc::new(transport),
                RetryPolicy::default(),
                dyn_clock.clone(),
            )
        };
        doc.connect(courier(&review_rx)?)?;
        review.connect(courier(&doc_rx)?)?;

        let runtime = Arc::new(
            tokio::runtime::Builder::new_multi_thread()
                .worker_threads(1)
                .enable_all()
                .build()
                .map_err(|e| HarnessError::Internal(e.to_string()))?,
        );
        Ok(Self {
            doc: Box::new(InProcessApi {
                router: doc_router(DocApp::new(doc.clone(), None, true)),
                runtime: runtime.clone(),
            }),
            review: Box::new(InProcessApi {
                router: review_router(ReviewApp::new(review.clone(), None, true)),
                runtime,
            }),
            in_process: Some(InProcess {
                doc,
                review,
                clock,
                faults: book,
            }),
        })
    }

    /// Talks to services already running at the given base URLs. Faults are
    /// not injected in this mode.
    pub fn live(doc_url: &str, review_url: &str) -> Result<Self, HarnessError> {
        Ok(Self {
            doc: Box::new(LiveApi::new(doc_url)?),
            review: Box::new(LiveApi::new(review_url)?),
            in_process: None,
        })
    }

    pub fn enter_step(&self, step: Option<usize>) {
        if let Some(p) = &self.in_process {
            p.faults.enter_step(step);
        }
    }
}
