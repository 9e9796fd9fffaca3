use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use revbridge_core::bridge::Endpoint;
use revbridge_core::docs::{Anchor, BlockOp, DocService, Session};
use revbridge_core::ids::{CommentId, DocumentId, JournalId};
use revbridge_core::permissions::Audience;
use revbridge_core::Result;
use serde::Deserialize;

use crate::api::{blocking, bearer, bridge_reply, bridge_request, parse_json};
use crate::persist::Persister;

pub struct DocApp {
    pub service: Arc<DocService>,
    persister: Option<Persister>,
    test_endpoints: bool,
}

impl DocApp {
    pub fn new(service: Arc<DocService>, persister: Option<Persister>, test_endpoints: bool) -> Self {
        Self {
            service,
            persister,
            test_endpoints,
        }
    }

    fn save(&self) {
        if let Some(p) = &self.persister {
            if let Err(e) = p.save(&self.service.export_state()) {
                tracing::error!(error = %e, "could not persist document service state");
            }
        }
    }

    fn session(&self, headers: &HeaderMap) -> Result<Session> {
        self.service.session(&bearer(headers)?)
    }
}

type App = State<Arc<DocApp>>;

#[derive(Deserialize)]
struct LoginBody {
    email: String,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct TitleBody {
    title: String,
}

#[derive(Deserialize)]
struct EditBody {
    base_revision: u64,
    ops: Vec<BlockOp>,
}

#[derive(Deserialize)]
struct CommentBody {
    anchor: Anchor,
    body: String,
    #[serde(default)]
    audience: Option<Audience>,
}

#[derive(Deserialize)]
struct SubmitBody {
    journal_id: JournalId,
}

#[derive(Deserialize)]
struct TokenBody {
    token: String,
}

/// Routes of the document service. `/admin/*` and `/events` exist only when
/// test endpoints are enabled.
pub fn doc_router(app: DocApp) -> Router {
    let test = app.test_endpoints;
    let mut router = Router::new()
        .route("/sessions", post(login))
        .route("/documents", post(create).get(list))
        .route("/documents/import", post(import))
        .route("/documents/{id}", get(view))
        .route("/documents/{id}/edits", post(edit))
        .route("/documents/{id}/collaborators", post(invite))
        .route("/documents/{id}/comments", post(comment))
        .route("/documents/{id}/comments/{cid}/approve", post(approve))
        .route("/documents/{id}/snapshot", get(snapshot))
        .route("/documents/{id}/submissions", post(submit))
        .route("/documents/{id}/resubmissions", post(resubmit))
        .route("/bridge/accounts", post(bridge_accounts))
        .route("/bridge/decisions", post(bridge_decisions))
        .route("/bridge/sso", post(sso))
        .route("/sso", get(sso_link));
    if test {
        router = router
            .route("/events", get(events))
            .route("/admin/admins", post(provision_admin));
    }
    router.with_state(Arc::new(app))
}

async fn login(State(app): App, body: Bytes) -> Response {
    blocking(move || {
        let b: LoginBody = parse_json(&body)?;
        let s = app.service.login(&b.email, &b.name);
        app.save();
        s
    })
    .await
}

async fn create(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: TitleBody = parse_json(&body)?;
        let r = app.service.create_document(&s, &b.title);
        app.save();
        r
    })
    .await
}

async fn import(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let r = app.service.import_manuscript(&s, &body);
        app.save();
        r
    })
    .await
}

async fn list(State(app): App, headers: HeaderMap) -> Response {
    blocking(move || Ok(app.service.list_documents(&app.session(&headers)?))).await
}

async fn view(State(app): App, headers: HeaderMap, Path(id): Path<String>) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        app.service.get_document(&s, &DocumentId(id))
    })
    .await
}

async fn edit(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: EditBody = parse_json(&body)?;
        let r = app.service.apply_edit(&s, &DocumentId(id), b.base_revision, &b.ops);
        app.save();
        r
    })
    .await
}

async fn invite(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: LoginBody = parse_json(&body)?;
        let r = app.service.invite_collaborator(&s, &DocumentId(id), &b.email, &b.name);
        app.save();
        r
    })
    .await
}

async fn comment(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: CommentBody = parse_json(&body)?;
        let r = app.service.add_comment(&s, &DocumentId(id), b.anchor, &b.body, b.audience);
        app.save();
        r
    })
    .await
}

async fn approve(
    State(app): App,
    headers: HeaderMap,
    Path((id, cid)): Path<(String, String)>,
) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let r = app.service.approve_comment(&s, &DocumentId(id), &CommentId(cid));
        app.save();
        r
    })
    .await
}

async fn snapshot(State(app): App, headers: HeaderMap, Path(id): Path<String>) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        app.service.export_snapshot_as(&s, &DocumentId(id))
    })
    .await
}

async fn submit(State(app): App, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let b: SubmitBody = parse_json(&body)?;
        let r = app.service.submit_document(&s, &DocumentId(id), &b.journal_id);
        app.save();
        r
    })
    .await
}

async fn resubmit(State(app): App, headers: HeaderMap, Path(id): Path<String>) -> Response {
    blocking(move || {
        let s = app.session(&headers)?;
        let r = app.service.resubmit_document(&s, &DocumentId(id));
        app.save();
        r
    })
    .await
}

async fn bridge_accounts(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    let request = bridge_request(Endpoint::DocAccounts, &headers, body);
    bridge_reply(move || {
        let r = app.service.receive_bridge(&request);
        app.save();
        r
    })
    .await
}

async fn bridge_decisions(State(app): App, headers: HeaderMap, body: Bytes) -> Response {
    let request = bridge_request(Endpoint::DocDecisions, &headers, body);
    bridge_reply(move || {
        let r = app.service.receive_bridge(&request);
        app.save();
        r
    })
    .await
}

fn consume(app: &DocApp, token: &str) -> Result<Session> {
    let r = app.service.consume_sso_token(token);
    app.save();
    r
}

async fn sso(State(app): App, body: Bytes) -> Response {
    blocking(move || {
        let b: TokenBody = parse_json(&body)?;
        consume(&app, &b.token)
    })
    .await
}

async fn sso_link(State(app): App, Query(q): Query<TokenBody>) -> Response {
    blocking(move || consume(&app, &q.token)).await
}

async fn events(State(app): App) -> Response {
    blocking(move || Ok(app.service.events())).await
}

async fn provision_admin(State(app): App, body: Bytes) -> Response {
    blocking(move || {
        let b: LoginBody = parse_json(&body)?;
        let r = app.service.provision_admin(&b.email, &b.name);
        app.save();
        r
    })
    .await
}

