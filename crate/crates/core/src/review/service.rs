use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::outbox::{Outbox, OutboxKind, OutboxMessage};
use crate::bridge::{
    make_sso_token, Ack, BridgeRequest, Courier, DecisionRelayed, Endpoint, Inbox, MessageKind,
    Resubmission, ReviewerAssigned, SubmitDocument, DEFAULT_SSO_TTL,
};
use crate::clock::{Clock, Timestamp};
use crate::error::{Error, Result};
use crate::ids::{DocumentId, IdGenerator, JournalId, SubmissionId, UserId};
use crate::model::{
    advance_submission, decision_allowed, AssignmentEvent, AssignmentState, Decision,
    EditorDecision, Email, EventLog, EventRecord, ReviewAssignment, ReviewRound, RoleKind,
    SubmissionEvent, SubmissionState, UserIdentity, BRIDGE_ACTOR,
};
use crate::permissions::{display_identity, BlindMode, ServiceSide, Subject};

#[derive(Debug, Clone)]
pub struct ReviewConfig {
    /// Base URL of the document service, used to build login links.
    pub doc_base_url: String,
    pub sso_ttl: Duration,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            doc_base_url: "http://localhost:8081".into(),
            sso_ttl: DEFAULT_SSO_TTL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Journal {
    pub journal_id: JournalId,
    pub name: String,
    pub blind_mode: BlindMode,
    pub max_rounds: u32,
    pub editors: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalSummary {
    pub journal_id: JournalId,
    pub name: String,
    pub blind_mode: BlindMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: SubmissionId,
    pub journal_id: JournalId,
    pub remote_document_id: DocumentId,
    pub title: String,
    /// Snapshot reviewed in each round, keyed by round index.
    pub snapshot_hashes: BTreeMap<u32, String>,
    pub corresponding_author: UserIdentity,
    pub co_authors: Vec<Email>,
    pub state: SubmissionState,
    pub rounds: Vec<ReviewRound>,
}

impl Submission {
    fn is_author(&self, email: &Email) -> bool {
        &self.corresponding_author.email == email || self.co_authors.contains(email)
    }

    fn current_round_mut(&mut self) -> Option<&mut ReviewRound> {
        let n = self.state.round()?;
        self.rounds.iter_mut().find(|r| r.round_index == n)
    }

    fn current_round(&self) -> Option<&ReviewRound> {
        let n = self.state.round()?;
        self.rounds.iter().find(|r| r.round_index == n)
    }

    fn transition(&mut self, event: &SubmissionEvent) -> Result<SubmissionState> {
        self.state = advance_submission(self.state, event)?;
        Ok(self.state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundView {
    pub round_index: u32,
    pub snapshot_hash: Option<String>,
    pub assignments: Vec<ReviewAssignment>,
    pub closed_by: Option<EditorDecision>,
}

/// A submission as one caller may see it. Editors see every assignment,
/// reviewers only their own, authors none (feedback reaches them by mail).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionView {
    pub submission_id: SubmissionId,
    pub journal_id: JournalId,
    pub remote_document_id: DocumentId,
    pub title: String,
    pub state: SubmissionState,
    pub state_label: String,
    pub viewer_role: RoleKind,
    pub rounds: Vec<RoundView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionSummary {
    pub submission_id: SubmissionId,
    pub journal_id: JournalId,
    pub title: String,
    pub state: String,
    pub role: RoleKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub token: String,
    pub user_id: UserId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Accounts {
    users: BTreeMap<UserId, UserIdentity>,
    by_email: BTreeMap<Email, UserId>,
}

impl Accounts {
    fn ensure(&mut self, ids: &IdGenerator, email: &Email, name: &str) -> Result<(UserIdentity, bool)> {
        if let Some(id) = self.by_email.get(email) {
            return Ok((self.users[id].clone(), false));
        }
        let name = if name.trim().is_empty() {
            email.as_str().split('@').next().unwrap_or_default()
        } else {
            name
        };
        let identity = UserIdentity::new(ids.user(), email.clone(), name)?;
        self.by_email.insert(email.clone(), identity.user_id.clone());
        self.users.insert(identity.user_id.clone(), identity.clone());
        Ok((identity, true))
    }
}

/// Everything the review service persists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewState {
    journals: BTreeMap<JournalId, Journal>,
    accounts: Accounts,
    submissions: BTreeMap<SubmissionId, Submission>,
    sessions: BTreeMap<String, ReviewSession>,
    outbox: Outbox,
    events: EventLog,
    processed_messages: BTreeMap<String, Value>,
}

impl ReviewState {
    pub fn events(&self) -> &[EventRecord] {
        self.events.records()
    }

    pub fn outbox(&self) -> &[OutboxMessage] {
        self.outbox.history()
    }

    pub fn submissions(&self) -> impl Iterator<Item = &Submission> {
        self.submissions.values()
    }

    pub fn author_accounts(&self) -> BTreeSet<UserId> {
        self.submissions
            .values()
            .map(|s| s.corresponding_author.user_id.clone())
            .collect()
    }

    pub fn account_count(&self) -> usize {
        self.accounts.users.len()
    }
}

pub struct ReviewService {
    secret: Vec<u8>,
    clock: Arc<dyn Clock>,
    ids: IdGenerator,
    config: ReviewConfig,
    journals: RwLock<BTreeMap<JournalId, Journal>>,
    accounts: RwLock<Accounts>,
    submissions: RwLock<BTreeMap<SubmissionId, Arc<Mutex<Submission>>>>,
    sessions: Mutex<BTreeMap<String, ReviewSession>>,
    outbox: Mutex<Outbox>,
    events: Mutex<EventLog>,
    inbox: Inbox,
    courier: OnceLock<Courier>,
}

impl ReviewService {
    pub fn new(
        secret: impl Into<Vec<u8>>,
        clock: Arc<dyn Clock>,
        ids: IdGenerator,
        config: ReviewConfig,
    ) -> Result<Self> {
        Self::restore(secret, clock, ids, config, ReviewState::default())
    }

    pub fn restore(
        secret: impl Into<Vec<u8>>,
        clock: Arc<dyn Clock>,
        ids: IdGenerator,
        config: ReviewConfig,
        state: ReviewState,
    ) -> Result<Self> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(Error::EmptySecret);
        }
        Ok(Self {
            secret,
            clock,
            ids,
            config,
            journals: RwLock::new(state.journals),
            accounts: RwLock::new(state.accounts),
            submissions: RwLock::new(
                state
                    .submissions
                    .into_iter()
                    .map(|(id, s)| (id, Arc::new(Mutex::new(s))))
                    .collect(),
            ),
            sessions: Mutex::new(state.sessions),
            outbox: Mutex::new(state.outbox),
            events: Mutex::new(state.events),
            inbox: Inbox::restore(state.processed_messages),
            courier: OnceLock::new(),
        })
    }

    pub fn connect(&self, courier: Courier) -> Result<()> {
        self.courier
            .set(courier)
            .map_err(|_| Error::Invalid("bridge already connected".into()))
    }

    pub fn courier(&self) -> Option<&Courier> {
        self.courier.get()
    }

    pub fn export_state(&self) -> ReviewState {
        let submissions = self.submissions.read();
        ReviewState {
            journals: self.journals.read().clone(),
            accounts: self.accounts.read().clone(),
            submissions: submissions
                .iter()
                .map(|(id, s)| (id.clone(), s.lock().clone()))
                .collect(),
            sessions: self.sessions.lock().clone(),
            outbox: self.outbox.lock().clone(),
            events: self.events.lock().clone(),
            processed_messages: self.inbox.snapshot(),
        }
    }

    pub fn events(&self) -> Vec<EventRecord> {
        self.events.lock().records().to_vec()
    }

    fn record(&self, actor: impl Into<String>, action: &str, subjects: Vec<String>) {
        let at = self.clock.now();
        self.events.lock().append(actor, action, subjects, at);
    }

    fn submission(&self, id: &SubmissionId) -> Result<Arc<Mutex<Submission>>> {
        self.submissions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::not_found("submission", id))
    }

    fn journal(&self, id: &JournalId) -> Result<Journal> {
        self.journals
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownJournal(id.to_string()))
    }

    fn bridge(&self) -> Result<&Courier> {
        self.courier
            .get()
            .ok_or_else(|| Error::Invalid("bridge is not connected".into()))
    }

    fn identity(&self, user: &UserId) -> Result<UserIdentity> {
        self.accounts
            .read()
            .users
            .get(user)
            .cloned()
            .ok_or(Error::Unauthenticated)
    }

    // ---- configuration and sessions ----

    /// Configures a journal and its editors' accounts.
    pub fn create_journal(
        &self,
        journal_id: &JournalId,
        name: &str,
        blind_mode: BlindMode,
        max_rounds: u32,
        editors: &[(String, String)],
    ) -> Result<Journal> {
        if max_rounds < 1 {
            return Err(Error::Invalid("max_rounds must be at least 1".into()));
        }
        if name.trim().is_empty() || journal_id.as_str().trim().is_empty() {
            return Err(Error::Invalid("journal id and name must not be empty".into()));
        }
        let emails = editors
            .iter()
            .map(|(e, n)| Ok((Email::parse(e)?, n.as_str())))
            .collect::<Result<Vec<_>>>()?;
        let mut journals = self.journals.write();
        if journals.contains_key(journal_id) {
            return Err(Error::Invalid(format!("journal {journal_id} already exists")));
        }
        let mut editor_ids = Vec::new();
        let mut created = Vec::new();
        {
            let mut accounts = self.accounts.write();
            for (email, name) in emails {
                let (identity, new) = accounts.ensure(&self.ids, &email, name)?;
                if new {
                    created.push(identity.user_id.clone());
                }
                editor_ids.push(identity.user_id);
            }
        }
        let journal = Journal {
            journal_id: journal_id.clone(),
            name: name.trim().to_string(),
            blind_mode,
            max_rounds,
            editors: editor_ids,
        };
        journals.insert(journal_id.clone(), journal.clone());
        drop(journals);
        for id in created {
            self.record("admin", "account.created", vec![id.to_string()]);
        }
        self.record("admin", "journal.created", vec![journal_id.to_string()]);
        Ok(journal)
    }

    /// Sign-in for known accounts. Authors and reviewers get their accounts
    /// through the bridge, editors through journal configuration.
    pub fn login(&self, email: &str) -> Result<ReviewSession> {
        let email = Email::parse(email)?;
        let user_id = self
            .accounts
            .read()
            .by_email
            .get(&email)
            .cloned()
            .ok_or(Error::Unauthenticated)?;
        let session = ReviewSession {
            token: self.ids.session(),
            user_id,
        };
        self.sessions
            .lock()
            .insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, token: &str) -> Result<ReviewSession> {
        self.sessions
            .lock()
            .get(token)
            .cloned()
            .ok_or(Error::Unauthenticated)
    }

    pub fn user_by_email(&self, email: &str) -> Option<UserIdentity> {
        let email = Email::parse(email).ok()?;
        let accounts = self.accounts.read();
        accounts
            .by_email
            .get(&email)
            .and_then(|id| accounts.users.get(id))
            .cloned()
    }

    /// Public journal directory, ordered by id.
    pub fn list_journals(&self) -> Vec<JournalSummary> {
        self.journals
            .read()
            .values()
            .map(|j| JournalSummary {
                journal_id: j.journal_id.clone(),
                name: j.name.clone(),
                blind_mode: j.blind_mode,
            })
            .collect()
    }

    // ---- bridge receivers ----

    pub fn receive_bridge(&self, request: &BridgeRequest) -> Result<Ack> {
        let secret = self.secret.clone();
        self.inbox.receive(&secret, request, |message| match request.endpoint {
            Endpoint::ReviewSubmissions => {
                let p: SubmitDocument = message.decode()?;
                let s = self.register_submission(&p)?;
                let blind_mode = self.journal(&s.journal_id)?.blind_mode;
                Ok(json!({
                    "submission_id": s.submission_id,
                    "state": s.state,
                    "blind_mode": blind_mode,
                    "author_user_id": s.corresponding_author.user_id,
                }))
            }
            Endpoint::ReviewResubmissions => {
                let p: Resubmission = message.decode()?;
                let s = self.receive_resubmission(&p)?;
                Ok(json!({ "submission_id": s.submission_id, "state": s.state }))
            }
            other => Err(Error::MalformedMessage(format!(
                "{} is not served here",
                other.path()
            ))),
        })
    }

    /// Registers a manuscript sent from the document service. The
    /// corresponding author's account is created on first contact and reused
    /// for every later submission from the same address.
    pub fn register_submission(&self, p: &SubmitDocument) -> Result<Submission> {
        let journal = self.journal(&p.journal_id)?;
        let email = Email::parse(&p.corresponding_author_email)?;
        let co_authors = p
            .co_author_emails
            .iter()
            .map(|e| Email::parse(e))
            .collect::<Result<Vec<_>>>()?;
        let (author, created) = self.accounts.write().ensure(&self.ids, &email, &p.author_name)?;
        if created {
            self.record(BRIDGE_ACTOR, "account.created", vec![author.user_id.to_string()]);
        }
        let mut submission = Submission {
            submission_id: self.ids.submission(),
            journal_id: journal.journal_id.clone(),
            remote_document_id: p.document_id.clone(),
            title: p.title.clone(),
            snapshot_hashes: BTreeMap::from([(1, p.snapshot_hash.clone())]),
            corresponding_author: author,
            co_authors,
            state: SubmissionState::Draft,
            rounds: Vec::new(),
        };
        submission.transition(&SubmissionEvent::Submit)?;
        self.submissions
            .write()
            .insert(submission.submission_id.clone(), Arc::new(Mutex::new(submission.clone())));
        self.record(
            BRIDGE_ACTOR,
            "submission.registered",
            vec![
                submission.submission_id.to_string(),
                submission.corresponding_author.user_id.to_string(),
                journal.journal_id.to_string(),
            ],
        );
        Ok(submission)
    }

    pub fn receive_resubmission(&self, p: &Resubmission) -> Result<Submission> {
        let handle = self.submission(&p.submission_id)?;
        let mut s = handle.lock();
        let journal = self.journal(&s.journal_id)?;
        let SubmissionState::Revising { round } = s.state else {
            return Err(Error::illegal(s.state, SubmissionEvent::Resubmit));
        };
        if p.round_index != round + 1 {
            return Err(Error::illegal(
                s.state,
                format!("Resubmit for round {}", p.round_index),
            ));
        }
        if p.round_index > journal.max_rounds {
            return Err(Error::RoundLimitExceeded {
                max_rounds: journal.max_rounds,
            });
        }
        s.transition(&SubmissionEvent::Resubmit)?;
        s.snapshot_hashes.insert(p.round_index, p.snapshot_hash.clone());
        self.record(
            BRIDGE_ACTOR,
            "submission.resubmitted",
            vec![s.submission_id.to_string(), format!("round:{}", p.round_index)],
        );
        Ok(s.clone())
    }

    // ---- editorial workflow ----

    fn require_editor(&self, session: &ReviewSession, s: &Submission) -> Result<Journal> {
        let journal = self.journal(&s.journal_id)?;
        if !journal.editors.contains(&session.user_id) {
            return Err(Error::NotEditor);
        }
        Ok(journal)
    }

    fn open_round_locked(&self, s: &mut Submission, journal: &Journal, actor: &UserId) -> Result<u32> {
        let SubmissionState::Submitted { completed_rounds } = s.state else {
            return Err(Error::illegal(s.state, SubmissionEvent::OpenRound));
        };
        if completed_rounds + 1 > journal.max_rounds {
            return Err(Error::RoundLimitExceeded {
                max_rounds: journal.max_rounds,
            });
        }
        let state = s.transition(&SubmissionEvent::OpenRound)?;
        let n = state.round().expect("UnderReview carries a round");
        s.rounds.push(ReviewRound::open(n, self.clock.now()));
        self.record(
            actor.to_string(),
            "round.opened",
            vec![s.submission_id.to_string(), format!("round:{n}")],
        );
        Ok(n)
    }

    /// Explicitly opens the next round of a submitted manuscript.
    pub fn open_round(&self, session: &ReviewSession, submission_id: &SubmissionId) -> Result<SubmissionView> {
        let handle = self.submission(submission_id)?;
        let mut s = handle.lock();
        let journal = self.require_editor(session, &s)?;
        self.open_round_locked(&mut s, &journal, &session.user_id)?;
        Ok(self.view(&s, RoleKind::Editor, &session.user_id))
    }

    /// Invites a reviewer into the current round, opening it if the
    /// submission is waiting. The document service provisions the reviewer
    /// before anything is committed here, so a failed delivery leaves no
    /// half-made assignment and retrying is safe.
    pub fn assign_reviewer(
        &self,
        session: &ReviewSession,
        submission_id: &SubmissionId,
        reviewer_email: &str,
        reviewer_name: &str,
    ) -> Result<ReviewAssignment> {
        let email = Email::parse(reviewer_email)?;
        let handle = self.submission(submission_id)?;
        let mut s = handle.lock();
        let journal = self.require_editor(session, &s)?;
        let round_index = match s.state {
            SubmissionState::Submitted { completed_rounds } => {
                if completed_rounds + 1 > journal.max_rounds {
                    return Err(Error::RoundLimitExceeded {
                        max_rounds: journal.max_rounds,
                    });
                }
                completed_rounds + 1
            }
            SubmissionState::UnderReview { round } => round,
            other => return Err(Error::illegal(other, "AssignReviewer")),
        };
        if s.is_author(&email) {
            return Err(Error::AuthorReviewerConflict(email.to_string()));
        }
        let existing = s
            .rounds
            .iter()
            .find(|r| r.round_index == round_index)
            .map(|r| r.assignments.as_slice())
            .unwrap_or_default();
        if existing.iter().any(|a| a.reviewer.email == email) {
            return Err(Error::DuplicateReviewer(email.to_string()));
        }
        let reviewer_number = existing.len() as u32 + 1;

        self.bridge()?.send(
            MessageKind::ReviewerAssigned,
            &ReviewerAssigned {
                submission_id: s.submission_id.clone(),
                document_id: s.remote_document_id.clone(),
                round_index,
                reviewer_email: email.to_string(),
                reviewer_name: reviewer_name.to_string(),
                reviewer_number,
                blind_mode: journal.blind_mode,
            },
        )?;

        if matches!(s.state, SubmissionState::Submitted { .. }) {
            self.open_round_locked(&mut s, &journal, &session.user_id)?;
        }
        let (reviewer, created) = self.accounts.write().ensure(&self.ids, &email, reviewer_name)?;
        if created {
            self.record(session.user_id.to_string(), "account.created", vec![reviewer.user_id.to_string()]);
        }
        let assignment = ReviewAssignment {
            assignment_id: self.ids.assignment(),
            submission_id: s.submission_id.clone(),
            round_index,
            reviewer_number,
            reviewer: reviewer.clone(),
            state: AssignmentState::Invited,
            general_feedback: None,
            recommendation: None,
        };
        s.current_round_mut()
            .expect("round is open")
            .assignments
            .push(assignment.clone());
        self.record(
            session.user_id.to_string(),
            "reviewer.assigned",
            vec![
                s.submission_id.to_string(),
                assignment.assignment_id.to_string(),
                reviewer.user_id.to_string(),
                format!("round:{round_index}"),
            ],
        );

        let token = make_sso_token(
            &self.secret,
            ServiceSide::ReviewService,
            &email,
            &s.remote_document_id,
            RoleKind::Reviewer,
            self.config.sso_ttl,
            self.clock.now(),
            self.ids.bytes::<16>(),
        )?;
        let link = format!(
            "{}/sso?token={}",
            self.config.doc_base_url.trim_end_matches('/'),
            token.encode()
        );
        self.mail(
            OutboxKind::ReviewerInvited,
            &email,
            format!("Invitation to review \"{}\"", s.title),
            format!(
                "Dear {},\n\nyou are invited to review \"{}\" for {} (round {}).\n\
                 Open the manuscript directly, without signing in again:\n{}\n",
                reviewer.display_name, s.title, journal.name, round_index, link
            ),
        );
        Ok(assignment)
    }

    fn own_assignment<'a>(s: &'a mut Submission, user: &UserId) -> Result<&'a mut ReviewAssignment> {
        let id = s.submission_id.to_string();
        s.current_round_mut()
            .filter(|r| r.is_open())
            .and_then(|r| r.assignments.iter_mut().find(|a| &a.reviewer.user_id == user))
            .ok_or(Error::NoGrant(id))
    }

    /// Accept or decline an invitation.
    pub fn respond_invitation(
        &self,
        session: &ReviewSession,
        submission_id: &SubmissionId,
        accept: bool,
    ) -> Result<ReviewAssignment> {
        let handle = self.submission(submission_id)?;
        let mut s = handle.lock();
        let a = Self::own_assignment(&mut s, &session.user_id)?;
        let (event, action) = if accept {
            (AssignmentEvent::Accept, "assignment.accepted")
        } else {
            (AssignmentEvent::Decline, "assignment.declined")
        };
        a.apply(event)?;
        let a = a.clone();
        self.record(
            session.user_id.to_string(),
            action,
            vec![submission_id.to_string(), a.assignment_id.to_string()],
        );
        Ok(a)
    }

    pub fn submit_review(
        &self,
        session: &ReviewSession,
        submission_id: &SubmissionId,
        general_feedback: &str,
        recommendation: Option<Decision>,
    ) -> Result<ReviewAssignment> {
        let handle = self.submission(submission_id)?;
        let mut s = handle.lock();
        let a = Self::own_assignment(&mut s, &session.user_id)?;
        a.apply(AssignmentEvent::SubmitReview {
            feedback: general_feedback.to_string(),
            recommendation,
        })?;
        let a = a.clone();
        self.record(
            session.user_id.to_string(),
            "review.submitted",
            vec![submission_id.to_string(), a.assignment_id.to_string()],
        );
        Ok(a)
    }

    /// Closes the current round with the editor's decision, mails the
    /// decision and all submitted feedback to the corresponding author and
    /// tells the document service.
    pub fn record_decision(
        &self,
        session: &ReviewSession,
        submission_id: &SubmissionId,
        decision: EditorDecision,
    ) -> Result<SubmissionView> {
        let handle = self.submission(submission_id)?;
        let mut s = handle.lock();
        let journal = self.require_editor(session, &s)?;
        let round_index = s
            .state
            .round()
            .filter(|_| matches!(s.state, SubmissionState::UnderReview { .. }))
            .ok_or_else(|| Error::illegal(s.state, "Decide"))?;
        let round = s.current_round().expect("UnderReview has a round");
        if !decision_allowed(round) {
            return Err(Error::illegal(s.state, "Decide on closed round"));
        }
        let next = advance_submission(s.state, &SubmissionEvent::Decide(decision.clone()))?;

        self.bridge()?.send(
            MessageKind::DecisionRelayed,
            &DecisionRelayed {
                submission_id: s.submission_id.clone(),
                document_id: s.remote_document_id.clone(),
                round_index,
                decision: decision.decision,
                state: next,
            },
        )?;

        s.transition(&SubmissionEvent::Decide(decision.clone()))?;
        let round = s
            .rounds
            .iter_mut()
            .find(|r| r.round_index == round_index)
            .expect("round exists");
        round.close(decision.clone())?;
        let round = round.clone();
        self.record(
            session.user_id.to_string(),
            "decision.recorded",
            vec![
                s.submission_id.to_string(),
                format!("round:{round_index}"),
                format!("{:?}", decision.decision),
            ],
        );

        let author = s.corresponding_author.clone();
        let mut notice = format!(
            "Dear {},\n\nthe editor of {} has decided on \"{}\" (round {}): {}.\n",
            author.display_name,
            journal.name,
            s.title,
            round_index,
            decision_label(decision.decision)
        );
        if !decision.rationale.trim().is_empty() {
            notice.push_str(&format!("\n{}\n", decision.rationale.trim()));
        }
        self.mail(
            OutboxKind::DecisionNotice,
            &author.email,
            format!("Decision on \"{}\"", s.title),
            notice,
        );
        self.mail(
            OutboxKind::FeedbackToAuthors,
            &author.email,
            format!("Reviewer feedback on \"{}\" (round {})", s.title, round_index),
            feedback_body(&round, journal.blind_mode),
        );
        Ok(self.view(&s, RoleKind::Editor, &session.user_id))
    }

    fn mail(&self, kind: OutboxKind, to: &Email, subject: String, body: String) {
        let message = OutboxMessage {
            message_id: self.ids.message(),
            recipient_email: to.clone(),
            subject,
            body,
            created_at: self.clock.now(),
            kind,
        };
        self.outbox.lock().push(message);
    }

    // ---- queries ----

    fn role_in(&self, s: &Submission, user: &UserId) -> Option<RoleKind> {
        let journal = self.journals.read().get(&s.journal_id).cloned()?;
        if journal.editors.contains(user) {
            Some(RoleKind::Editor)
        } else if &s.corresponding_author.user_id == user {
            Some(RoleKind::Author)
        } else if s
            .rounds
            .iter()
            .any(|r| r.assignments.iter().any(|a| &a.reviewer.user_id == user))
        {
            Some(RoleKind::Reviewer)
        } else {
            None
        }
    }

    fn view(&self, s: &Submission, role: RoleKind, viewer: &UserId) -> SubmissionView {
        let rounds = s
            .rounds
            .iter()
            .map(|r| RoundView {
                round_index: r.round_index,
                snapshot_hash: s.snapshot_hashes.get(&r.round_index).cloned(),
                assignments: match role {
                    RoleKind::Editor | RoleKind::Admin => r.assignments.clone(),
                    RoleKind::Reviewer => r
                        .assignments
                        .iter()
                        .filter(|a| &a.reviewer.user_id == viewer)
                        .cloned()
                        .collect(),
                    RoleKind::Author => Vec::new(),
                },
                closed_by: r.closed_by.clone(),
            })
            .collect();
        SubmissionView {
            submission_id: s.submission_id.clone(),
            journal_id: s.journal_id.clone(),
            remote_document_id: s.remote_document_id.clone(),
            title: s.title.clone(),
            state: s.state,
            state_label: s.state.to_string(),
            viewer_role: role,
            rounds,
        }
    }

    pub fn get_submission(&self, session: &ReviewSession, submission_id: &SubmissionId) -> Result<SubmissionView> {
        let handle = self.submission(submission_id)?;
        let s = handle.lock();
        let role = self
            .role_in(&s, &session.user_id)
            .ok_or_else(|| Error::NoGrant(submission_id.to_string()))?;
        Ok(self.view(&s, role, &session.user_id))
    }

    /// Every submission the caller edits, authored or reviews.
    pub fn list_submissions(&self, session: &ReviewSession) -> Vec<SubmissionSummary> {
        let handles: Vec<_> = self.submissions.read().values().cloned().collect();
        handles
            .iter()
            .filter_map(|h| {
                let s = h.lock();
                let role = self.role_in(&s, &session.user_id)?;
                Some(SubmissionSummary {
                    submission_id: s.submission_id.clone(),
                    journal_id: s.journal_id.clone(),
                    title: s.title.clone(),
                    state: s.state.to_string(),
                    role,
                })
            })
            .collect()
    }

    /// Unread outbox messages in creation order; marks them read.
    pub fn drain_outbox(&self) -> Vec<OutboxMessage> {
        self.outbox.lock().drain()
    }

    pub fn outbox_history(&self) -> Vec<OutboxMessage> {
        self.outbox.lock().history().to_vec()
    }

    pub fn whoami(&self, session: &ReviewSession) -> Result<UserIdentity> {
        self.identity(&session.user_id)
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }
}

fn decision_label(d: Decision) -> &'static str {
    match d {
        Decision::Accept => "accepted",
        Decision::Reject => "rejected",
        Decision::RequestRevision => "revision requested",
    }
}

/// General feedback of every submitted review of `round`, reviewers named
/// as the authors would see them.
fn feedback_body(round: &ReviewRound, mode: BlindMode) -> String {
    let mut body = String::new();
    let mut any = false;
    for a in round.submitted() {
        any = true;
        let name = display_identity(
            RoleKind::Author,
            Subject {
                role: RoleKind::Reviewer,
                name: &a.reviewer.display_name,
                reviewer_number: Some(a.reviewer_number),
            },
            mode,
        );
        let recommendation = a
            .recommendation
            .map(|r| format!(" (recommends: {})", decision_label(r)))
            .unwrap_or_default();
        body.push_str(&format!(
            "{name}{recommendation}:\n{}\n\n",
            a.general_feedback.as_deref().unwrap_or_default()
        ));
    }
    if !any {
        body.push_str("No reviewer feedback was submitted in this round.\n");
    }
    body
}
