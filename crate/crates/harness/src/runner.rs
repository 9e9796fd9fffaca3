use std::collections::{BTreeMap, BTreeSet};

use revbridge_core::model::RoleKind;
use serde_json::{json, Value};

use crate::deploy::{Api, Deployment};
use crate::report::{RunReport, StepReport};
use crate::script::{Action, Person, ScenarioScript, Step};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Doc,
    Review,
}

#[derive(Default)]
struct Sessions {
    doc: BTreeMap<String, String>,
    review: BTreeMap<String, String>,
}

/// Outcome of one HTTP call: `Ok(result)` or `Err((class, body))`.
type Outcome = Result<Value, (String, Value)>;

struct Run<'a> {
    script: &'a ScenarioScript,
    deployment: &'a Deployment,
    sessions: Sessions,
    bindings: BTreeMap<String, Value>,
}

/// Executes `script` step by step against `deployment` and collects the
/// report. Step failures are recorded, not fatal; only transport-level
/// problems abort the run.
pub fn run_scenario(
    script: &ScenarioScript,
    deployment: &Deployment,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    script.validate()?;
    let mut run = Run {
        script,
        deployment,
        sessions: Sessions::default(),
        bindings: BTreeMap::new(),
    };
    run.setup()?;
    let mut steps = Vec::with_capacity(script.steps.len());
    for (index, step) in script.steps.iter().enumerate() {
        deployment.enter_step(Some(index));
        let outcome = run.step(step);
        deployment.enter_step(None);
        let outcome = outcome?;
        let (tag, result) = match outcome {
            Ok(v) => {
                run.bind(step, &v);
                ("ok".to_string(), v)
            }
            Err((class, body)) => (class, body),
        };
        steps.push(StepReport {
            index,
            actor: step.actor.clone(),
            action: action_name(step.action),
            expect: step.expect.clone(),
            matched: tag == step.expect,
            outcome: tag,
            result,
        });
    }
    let submissions = run.final_submissions()?;
    let doc_events = expect_ok(deployment.doc.call("GET", "/events", None, None)?)?;
    let review_events = expect_ok(deployment.review.call("GET", "/events", None, None)?)?;
    let outbox = expect_ok(deployment.review.call("GET", "/outbox", None, None)?)?;
    Ok(RunReport {
        scenario: script.name.clone(),
        seed,
        steps,
        submissions,
        doc_events,
        review_events,
        outbox,
        violations: consistency_violations(deployment),
    })
}

fn action_name(a: Action) -> String {
    serde_json::to_value(a)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn outcome((status, body): (u16, Value)) -> Outcome {
    if (200..300).contains(&status) {
        Ok(body)
    } else {
        let class = body["error"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("Http{status}"));
        Err((class, body))
    }
}

fn expect_ok(response: (u16, Value)) -> Result<Value, HarnessError> {
    outcome(response).map_err(|(class, body)| {
        HarnessError::Internal(format!("harness request failed with {class}: {body}"))
    })
}

fn body(v: Value) -> Option<Vec<u8>> {
    Some(serde_json::to_vec(&v).expect("json"))
}

impl Run<'_> {
    fn person(&self, alias: &str) -> &Person {
        &self.script.setup.people[alias]
    }

    fn api(&self, side: Side) -> &dyn Api {
        match side {
            Side::Doc => self.deployment.doc.as_ref(),
            Side::Review => self.deployment.review.as_ref(),
        }
    }

    fn setup(&mut self) -> Result<(), HarnessError> {
        let setup = &self.script.setup;
        for j in &setup.journals {
            let editors: Vec<Value> = j
                .editors
                .iter()
                .map(|e| {
                    let p = self.person(e);
                    json!({ "email": p.email, "name": p.name })
                })
                .collect();
            let request = json!({
                "journal_id": j.journal_id,
                "name": j.name,
                "blind_mode": j.blind_mode,
                "max_rounds": j.max_rounds,
                "editors": editors,
            });
            expect_ok(self.deployment.review.call("POST", "/admin/journals", None, body(request))?)?;
        }
        for a in &setup.doc_admins {
            let p = self.person(a);
            let request = json!({ "email": p.email, "name": p.name });
            expect_ok(self.deployment.doc.call("POST", "/admin/admins", None, body(request))?)?;
        }
        Ok(())
    }

    fn session(&mut self, side: Side, actor: &str) -> Result<Result<String, (String, Value)>, HarnessError> {
        let known = match side {
            Side::Doc => self.sessions.doc.get(actor),
            Side::Review => self.sessions.review.get(actor),
        };
        if let Some(token) = known {
            return Ok(Ok(token.clone()));
        }
        let p = self.person(actor).clone();
        let request = match side {
            Side::Doc => json!({ "email": p.email, "name": p.name }),
            Side::Review => json!({ "email": p.email }),
        };
        let response = self.api(side).call("POST", "/sessions", None, body(request))?;
        Ok(outcome(response).map(|v| {
            let token = v["token"].as_str().unwrap_or_default().to_string();
            match side {
                Side::Doc => self.sessions.doc.insert(actor.to_string(), token.clone()),
                Side::Review => self.sessions.review.insert(actor.to_string(), token.clone()),
            };
            token
        }))
    }

    fn bind(&mut self, step: &Step, result: &Value) {
        for (name, field) in &step.bind {
            let v = if field.starts_with('/') {
                result.pointer(field)
            } else {
                result.get(field)
            };
            if let Some(v) = v {
                self.bindings.insert(name.clone(), v.clone());
            }
        }
    }

    fn step(&mut self, step: &Step) -> Result<Outcome, HarnessError> {
        let args = crate::script::substitute(&step.args, &self.bindings);
        let arg = |k: &str| -> String {
            match args.get(k) {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => String::new(),
            }
        };
        let pick = |keys: &[&str]| -> Value {
            let mut out = serde_json::Map::new();
            for k in keys {
                if let Some(v) = args.get(*k) {
                    out.insert(k.to_string(), v.clone());
                }
            }
            Value::Object(out)
        };
        let actor = step.actor.clone().unwrap_or_default();
        use Action::*;
        let (side, method, path, payload): (Side, &str, String, Option<Vec<u8>>) = match step.action {
            CreateDocument => (Side::Doc, "POST", "/documents".into(), body(pick(&["title"]))),
            ImportManuscript => (
                Side::Doc,
                "POST",
                "/documents/import".into(),
                Some(arg("canonical").into_bytes()),
            ),
            EditDocument => (
                Side::Doc,
                "POST",
                format!("/documents/{}/edits", arg("document")),
                body(pick(&["base_revision", "ops"])),
            ),
            InviteCollaborator => {
                let p = self.person(&arg("person"));
                (
                    Side::Doc,
                    "POST",
                    format!("/documents/{}/collaborators", arg("document")),
                    body(json!({ "email": p.email, "name": p.name })),
                )
            }
            AddComment => (
                Side::Doc,
                "POST",
                format!("/documents/{}/comments", arg("document")),
                body(pick(&["anchor", "body", "audience"])),
            ),
            ApproveComment => (
                Side::Doc,
                "POST",
                format!("/documents/{}/comments/{}/approve", arg("document"), arg("comment")),
                None,
            ),
            ViewDocument => (Side::Doc, "GET", format!("/documents/{}", arg("document")), None),
            ListDocuments => (Side::Doc, "GET", "/documents".into(), None),
            ExportSnapshot => (
                Side::Doc,
                "GET",
                format!("/documents/{}/snapshot", arg("document")),
                None,
            ),
            SubmitDocument => (
                Side::Doc,
                "POST",
                format!("/documents/{}/submissions", arg("document")),
                body(json!({ "journal_id": arg("journal") })),
            ),
            ResubmitDocument => (
                Side::Doc,
                "POST",
                format!("/documents/{}/resubmissions", arg("document")),
                None,
            ),
            FollowSsoLink => return self.follow_sso_link(&actor),
            ListJournals => (Side::Review, "GET", "/journals".into(), None),
            AssignReviewer => {
                let p = self.person(&arg("reviewer"));
                (
                    Side::Review,
                    "POST",
                    format!("/submissions/{}/reviewers", arg("submission")),
                    body(json!({ "email": p.email, "name": p.name })),
                )
            }
            RespondInvitation => (
                Side::Review,
                "POST",
                format!("/submissions/{}/invitation", arg("submission")),
                body(pick(&["accept"])),
            ),
            SubmitReview => (
                Side::Review,
                "POST",
                format!("/submissions/{}/reviews", arg("submission")),
                body(json!({
                    "general_feedback": arg("feedback"),
                    "recommendation": args.get("recommendation"),
                })),
            ),
            RecordDecision => (
                Side::Review,
                "POST",
                format!("/submissions/{}/decision", arg("submission")),
                body(pick(&["decision", "rationale"])),
            ),
            OpenRound => (
                Side::Review,
                "POST",
                format!("/submissions/{}/rounds", arg("submission")),
                None,
            ),
            ViewSubmission => (
                Side::Review,
                "GET",
                format!("/submissions/{}", arg("submission")),
                None,
            ),
            ListSubmissions => (Side::Review, "GET", "/submissions".into(), None),
            DrainOutbox => (Side::Review, "GET", "/outbox?drain=true".into(), None),
        };
        let token = if step.action.needs_actor() {
            match self.session(side, &actor)? {
                Ok(t) => Some(t),
                Err(failure) => return Ok(Err(failure)),
            }
        } else {
            None
        };
        let response = self.api(side).call(method, &path, token.as_deref(), payload)?;
        Ok(outcome(response))
    }

    /// Opens the newest invitation addressed to `actor` through the
    /// document service, replacing the actor's document session.
    fn follow_sso_link(&mut self, actor: &str) -> Result<Outcome, HarnessError> {
        let email = self.person(actor).email.to_lowercase();
        let outbox = expect_ok(self.deployment.review.call("GET", "/outbox", None, None)?)?;
        let token = outbox
            .as_array()
            .into_iter()
            .flatten()
            .rev()
            .filter(|m| m["kind"] == "ReviewerInvited" && m["recipient_email"] == email.as_str())
            .filter_map(|m| m["body"].as_str())
            .filter_map(|b| b.split("token=").nth(1))
            .find_map(|t| t.split_whitespace().next())
            .map(str::to_string);
        let Some(token) = token else {
            return Ok(Err(("NoInvitation".into(), Value::Null)));
        };
        let response =
            self.deployment
                .doc
                .call("POST", "/bridge/sso", None, body(json!({ "token": token })))?;
        let result = outcome(response);
        if let Ok(session) = &result {
            if let Some(t) = session["token"].as_str() {
                self.sessions.doc.insert(actor.to_string(), t.to_string());
            }
        }
        Ok(result)
    }

    fn final_submissions(&mut self) -> Result<Value, HarnessError> {
        let Some(editor) = self
            .script
            .setup
            .journals
            .first()
            .and_then(|j| j.editors.first())
            .cloned()
        else {
            return Ok(json!([]));
        };
        let token = match self.session(Side::Review, &editor)? {
            Ok(t) => t,
            Err((class, _)) => return Err(HarnessError::Internal(format!("editor login: {class}"))),
        };
        expect_ok(self.deployment.review.call("GET", "/submissions", Some(&token), None)?)
    }
}

/// Checks that only in-process runs can make: every reviewer assignment on
/// the review side is matched by a Reviewer grant for the same address on
/// the same document.
fn consistency_violations(deployment: &Deployment) -> Vec<String> {
    let Some(services) = &deployment.in_process else {
        return Vec::new();
    };
    let review = services.review.export_state();
    let grants = services.doc.export_state().grants();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in review.submissions() {
        for round in &s.rounds {
            for a in &round.assignments {
                if !seen.insert((s.remote_document_id.clone(), a.reviewer.email.clone())) {
                    continue;
                }
                let granted = services
                    .doc
                    .user_by_email(a.reviewer.email.as_str())
                    .is_some_and(|u| {
                        grants.iter().any(|g| {
                            g.user_id == u.user_id
                                && g.document_id == s.remote_document_id
                                && g.role == RoleKind::Reviewer
                        })
                    });
                if !granted {
                    out.push(format!(
                        "assignment {} has no Reviewer grant on {}",
                        a.assignment_id, s.remote_document_id
                    ));
                }
            }
        }
    }
    out
}
