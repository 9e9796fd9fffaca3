use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use revbridge_core::bridge::Endpoint;
use revbridge_core::ids::{JournalId, SubmissionId};
use revbridge_core::model::{Decision, EditorDecision};
use revbridge_core::permissions::BlindMode;
use revbridge_core::review::{ReviewService, ReviewSession};
use revbridge_core::Result;
use serde::Deserialize;

use crate::api::{blocking, bearer, bridge_reply, bridge_request, parse_json};
use crate::persist::Persister;

pub struct ReviewApp {
    pub service: Arc<ReviewService>,
    persister: Option<Persister>,
    test_endpoints: bool,
}

impl ReviewApp {
    pub fn new(service: Arc<ReviewService>, persister: Option<Persister>, test_endpoints: bool) -> Self {
        Self {
            service,
            persister,
            test_endpoints,
        }
    }

    fn save(&self) {
        if let Some(p) = &self.persister {
            if let Err(e) = p.save(&self.service.export_state()) {
                tracing::error!(error = %e, "could not persist review service state");
            }
        }
    }

    fn session(&self, headers: &HeaderMap) -> Result<ReviewSession> {
        self.service.session(&bearer(headers)?)
    }
}

type App = State<Arc<ReviewApp>>;

#[derive(Deserialize)]
struct LoginBody {
    email: String,
}

#[derive(Deserialize)]
struct ReviewerBody {
    email: String,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct InvitationBody {
    accept: bool,
}

#[derive(Deserialize)]
struct ReviewBody {
    general_feedback: String,
    #[serde(default)]
    recommendation: Option<Decision>,
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: Decision,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct EditorBody {
    email: String,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct JournalBody {
    journal_id: JournalId,
    name: String,
    #[serde(default)]
    blind_mode: BlindMode,
    #[serde(default = "default_rounds")]
    max_rounds: u32,
    #[serde(default)]
    editors: Vec<EditorBody>,
}

fn default_rounds() -> u32 {
    3
}

#[derive(Deserialize)]
struct OutboxQuery {
    #[serde(default)]
    drain: bool,
}

/// Routes of the review service. `/outbox`, `/events` and `/admin/*` exist
/// only when test endpoints are enabled.
pub fn review_router(app: ReviewApp) -> Router {
    let test = app.test_endpoints;
    let mut router = Router::new()
        .route("/sessions", post(login))
        .route("/journals", get(journals))
        .route("/submissions", get(list))
        .route("/submissions/{id}", get(view))
        .route("/submissions/{id}/reviewers", post(assign))
        .route("/submissions/{id}/invitation", post(respond))
        .route("/submissions/{id}/reviews", post(review))
        .route("/submissions/{id}/decision", post(decide))
        .route("/submissions/{id}/rounds", post(open_round))
        .route("/bridge/submissions", post(bridge_submissions))
        .route("/bridge/resubmissions", post(bridge_resubmissions));
    if test {
        router = router
            .route("/outbox", get(outbox))
            .route("/events", get(events))
            .route("/admin/journals", post(create_journal));
    }
    router.with_state(Arc::new(app))
}

async fn login(State(app): App, body: Bytes) -> Response {
    blocking(move || {
        let b: LoginBody = parse_json(&body)?;
        let s = app.service.login(&b.email);
        app.save();
        s
    })
    .await
}

async fn journals(State(app): App) -> Response {
    blocking(move || Ok(app.service.list_journals())).await
}

async fn list(State(app): App, headers: HeaderMap) -> Response {
    blocking(move || Ok(app.service.list_submissions(&app.session(&headers)?))).await
}

async fn view(State(app): App, headers: HeaderMap, Path(id): Path<String>) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        app.service.get_submission(&s, &SubmissionId(id))
    })
    .await
}

async fn assign(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: ReviewerBody = parse_json(&body)?;
        let r = app.service.assign_reviewer(&s, &SubmissionId(id), &b.email, &b.name);
        app.save();
        r
    })
    .await
}

async fn respond(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: InvitationBody = parse_json(&body)?;
        let r = app.service.respond_invitation(&s, &SubmissionId(id), b.accept);
        app.save();
        r
    })
    .await
}

async fn review(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: ReviewBody = parse_json(&body)?;
        let r = app
            .service
            .submit_review(&s, &SubmissionId(id), &b.general_feedback, b.recommendation);
        app.save();
        r
    })
    .await
}

async fn decide(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: DecisionBody = parse_json(&body)?;
        let r = app.service.record_decision(
            &s,
            &SubmissionId(id),
            EditorDecision::new(b.decision, b.rationale),
        );
        app.save();
        r
    })
    .await
}

async fn open_round(State(app): App, headers: HeaderMap, Path(id): Path<String>) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let r = app.service.open_round(&s, &SubmissionId(id));
        app.save();
        r
    })
    .await
}

async fn bridge_submissions(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    let request = bridge_request(Endpoint::ReviewSubmissions, &headers, body);
    bridge_reply(move || {
        let r = app.service.receive_bridge(&request);
        app.save();
        r
    })
    .await
}

async fn bridge_resubmissions(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    let request = bridge_request(Endpoint::ReviewResubmissions, &headers, body);
    bridge_reply(move || {
        let r = app.service.receive_bridge(&request);
        app.save();
        r
    })
    .await
}

async fn outbox(State(app): App, Query(q): Query<OutboxQuery>) -> Response {
    blocking(move || {
        if q.drain {
            let r = app.service.drain_outbox();
            app.save();
            Ok(r)
        } else {
            Ok(app.service.outbox_history())
        }
    })
    .await
}

async fn events(State(app): App) -> Response {
    blocking(move || Ok(app.service.events())).await
}

async fn create_journal(State(app): App, body: Bytes) -> Response {
    blocking(move || {
        let b: JournalBody = parse_json(&body)?;
        let editors: Vec<(String, String)> =
            b.editors.into_iter().map(|e| (e.email, e.name)).collect();
        let r = app
            .service
            .create_journal(&b.journal_id, &b.name, b.blind_mode, b.max_rounds, &editors);
        app.save();
        r
    })
    .await
}
