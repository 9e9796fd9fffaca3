use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::manuscript::{Anchor, BlockOp, Comment, Manuscript};
use crate::bridge::{
    Ack, BridgeRequest, Courier, DecisionRelayed, Endpoint, Inbox, MessageKind, Resubmission,
    ReviewerAssigned, SsoToken, SubmitDocument,
};
use crate::canonical::{Block, CanonicalManuscript};
use crate::clock::{Clock, Timestamp};
use crate::error::{Error, Result};
use crate::ids::{CommentId, DocumentId, IdGenerator, JournalId, SubmissionId, UserId};
use crate::model::{
    Decision, Email, EventLog, EventRecord, RoleGrant, RoleKind, SubmissionState, UserIdentity,
    BRIDGE_ACTOR,
};
use crate::permissions::{
    self, comment_visible, display_identity, ApproveOutcome, Audience, BlindMode, GrantOutcome,
    Grants, Subject, VisibilityState,
};

/// An authenticated caller. SSO sessions are scoped to a single document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: UserId,
    pub scope: Option<DocumentId>,
}

/// What the document service knows about a manuscript's life in a journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionLink {
    pub submission_id: SubmissionId,
    pub journal_id: JournalId,
    pub state: SubmissionState,
    pub last_decision: Option<Decision>,
    pub snapshot_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub document_id: DocumentId,
    pub revision: u64,
    pub canonical: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentView {
    pub comment_id: CommentId,
    pub anchor: Anchor,
    pub author: String,
    pub author_role: RoleKind,
    pub body: String,
    pub visibility: VisibilityState,
    pub audience: Option<Audience>,
    pub orphaned: bool,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub document_id: DocumentId,
    pub title: String,
    pub revision: u64,
    pub viewer_role: RoleKind,
    pub blocks: Vec<Block>,
    pub comments: Vec<CommentView>,
    pub submission: Option<SubmissionLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentListing {
    pub document_id: DocumentId,
    pub title: String,
    pub role: RoleKind,
    pub submission_state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DocEntry {
    manuscript: Manuscript,
    grants: Grants,
    comments: Vec<Comment>,
    blind_mode: BlindMode,
    reviewer_numbers: BTreeMap<UserId, u32>,
    submission: Option<SubmissionLink>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Accounts {
    users: BTreeMap<UserId, UserIdentity>,
    by_email: BTreeMap<Email, UserId>,
    admins: BTreeSet<UserId>,
}

impl Accounts {
    /// Returns the account for `email`, creating it when unknown.
    fn ensure(&mut self, ids: &IdGenerator, email: &Email, name: &str) -> Result<(UserId, bool)> {
        if let Some(id) = self.by_email.get(email) {
            return Ok((id.clone(), false));
        }
        let name = if name.trim().is_empty() {
            email.as_str().split('@').next().unwrap_or_default()
        } else {
            name
        };
        let identity = UserIdentity::new(ids.user(), email.clone(), name)?;
        let id = identity.user_id.clone();
        self.by_email.insert(email.clone(), id.clone());
        self.users.insert(id.clone(), identity);
        Ok((id, true))
    }

    fn name(&self, id: &UserId) -> String {
        self.users
            .get(id)
            .map(|u| u.display_name.clone())
            .unwrap_or_else(|| id.to_string())
    }
}

/// Everything the document service persists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocState {
    accounts: Accounts,
    documents: BTreeMap<DocumentId, DocEntry>,
    sessions: BTreeMap<String, Session>,
    spent_nonces: BTreeSet<String>,
    events: EventLog,
    processed_messages: BTreeMap<String, Value>,
}

impl DocState {
    pub fn events(&self) -> &[EventRecord] {
        self.events.records()
    }

    /// Every (user, document, role) triple; used by invariant checks.
    pub fn grants(&self) -> Vec<RoleGrant> {
        self.documents
            .values()
            .flat_map(|e| e.grants.iter().cloned())
            .collect()
    }

    pub fn account_count(&self) -> usize {
        self.accounts.users.len()
    }
}

pub struct DocService {
    secret: Vec<u8>,
    clock: Arc<dyn Clock>,
    ids: IdGenerator,
    accounts: RwLock<Accounts>,
    documents: RwLock<BTreeMap<DocumentId, Arc<Mutex<DocEntry>>>>,
    sessions: Mutex<BTreeMap<String, Session>>,
    spent_nonces: Mutex<BTreeSet<String>>,
    events: Mutex<EventLog>,
    inbox: Inbox,
    courier: OnceLock<Courier>,
}

impl DocService {
    pub fn new(secret: impl Into<Vec<u8>>, clock: Arc<dyn Clock>, ids: IdGenerator) -> Result<Self> {
        Self::restore(secret, clock, ids, DocState::default())
    }

    pub fn restore(
        secret: impl Into<Vec<u8>>,
        clock: Arc<dyn Clock>,
        ids: IdGenerator,
        state: DocState,
    ) -> Result<Self> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(Error::EmptySecret);
        }
        let documents = state
            .documents
            .into_iter()
            .map(|(id, e)| (id, Arc::new(Mutex::new(e))))
            .collect();
        Ok(Self {
            secret,
            clock,
            ids,
            accounts: RwLock::new(state.accounts),
            documents: RwLock::new(documents),
            sessions: Mutex::new(state.sessions),
            spent_nonces: Mutex::new(state.spent_nonces),
            events: Mutex::new(state.events),
            inbox: Inbox::restore(state.processed_messages),
            courier: OnceLock::new(),
        })
    }

    /// Attaches the outgoing bridge. Can only be done once.
    pub fn connect(&self, courier: Courier) -> Result<()> {
        self.courier
            .set(courier)
            .map_err(|_| Error::Invalid("bridge already connected".into()))
    }

    pub fn courier(&self) -> Option<&Courier> {
        self.courier.get()
    }

    pub fn export_state(&self) -> DocState {
        let documents = self.documents.read();
        DocState {
            accounts: self.accounts.read().clone(),
            documents: documents
                .iter()
                .map(|(id, e)| (id.clone(), e.lock().clone()))
                .collect(),
            sessions: self.sessions.lock().clone(),
            spent_nonces: self.spent_nonces.lock().clone(),
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

    fn entry(&self, id: &DocumentId) -> Result<Arc<Mutex<DocEntry>>> {
        self.documents
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::not_found("document", id))
    }

    fn role_on(&self, entry: &DocEntry, session: &Session) -> Result<RoleKind> {
        let doc = &entry.manuscript.document_id;
        if session.scope.as_ref().is_some_and(|s| s != doc) {
            return Err(Error::NoGrant(doc.to_string()));
        }
        if let Some(role) = entry.grants.role_of(&session.user_id, doc) {
            return Ok(role);
        }
        if self.accounts.read().admins.contains(&session.user_id) {
            return Ok(RoleKind::Admin);
        }
        Err(Error::NoGrant(doc.to_string()))
    }

    // ---- accounts and sessions ----

    /// Plain sign-in; creates the account on first use.
    pub fn login(&self, email: &str, display_name: &str) -> Result<Session> {
        let email = Email::parse(email)?;
        let (user_id, created) = self.accounts.write().ensure(&self.ids, &email, display_name)?;
        if created {
            self.record(user_id.to_string(), "account.created", vec![user_id.to_string()]);
        }
        Ok(self.open_session(user_id, None))
    }

    fn open_session(&self, user_id: UserId, scope: Option<DocumentId>) -> Session {
        let session = Session {
            token: self.ids.session(),
            user_id,
            scope,
        };
        self.sessions
            .lock()
            .insert(session.token.clone(), session.clone());
        session
    }

    pub fn session(&self, token: &str) -> Result<Session> {
        self.sessions
            .lock()
            .get(token)
            .cloned()
            .ok_or(Error::Unauthenticated)
    }

    /// Registers a site administrator. Editors are configured this way and
    /// never provisioned over the bridge.
    pub fn provision_admin(&self, email: &str, display_name: &str) -> Result<UserId> {
        let email = Email::parse(email)?;
        let mut accounts = self.accounts.write();
        let (id, created) = accounts.ensure(&self.ids, &email, display_name)?;
        let promoted = accounts.admins.insert(id.clone());
        drop(accounts);
        if created {
            self.record("admin", "account.created", vec![id.to_string()]);
        }
        if promoted {
            self.record("admin", "admin.configured", vec![id.to_string()]);
        }
        Ok(id)
    }

    pub fn user(&self, id: &UserId) -> Option<UserIdentity> {
        self.accounts.read().users.get(id).cloned()
    }

    pub fn user_by_email(&self, email: &str) -> Option<UserIdentity> {
        let email = Email::parse(email).ok()?;
        let accounts = self.accounts.read();
        let id = accounts.by_email.get(&email)?;
        accounts.users.get(id).cloned()
    }

    // ---- authoring ----

    pub fn create_document(&self, session: &Session, title: &str) -> Result<Manuscript> {
        let title = title.trim();
        if title.is_empty() {
            return Err(Error::EmptyTitle);
        }
        self.insert_document(session, title.to_string(), Vec::new(), "document.created")
    }

    fn insert_document(
        &self,
        session: &Session,
        title: String,
        blocks: Vec<Block>,
        action: &str,
    ) -> Result<Manuscript> {
        if session.scope.is_some() {
            return Err(Error::NotAuthorized);
        }
        let document_id = self.ids.document();
        let manuscript = Manuscript {
            document_id: document_id.clone(),
            title,
            blocks,
            revision: 0,
            owner: session.user_id.clone(),
        };
        let mut grants = Grants::default();
        grants.grant_role(&session.user_id, &document_id, RoleKind::Author, self.clock.now())?;
        let entry = DocEntry {
            manuscript: manuscript.clone(),
            grants,
            comments: Vec::new(),
            blind_mode: BlindMode::Open,
            reviewer_numbers: BTreeMap::new(),
            submission: None,
        };
        self.documents
            .write()
            .insert(document_id.clone(), Arc::new(Mutex::new(entry)));
        self.record(
            session.user_id.to_string(),
            action,
            vec![document_id.to_string()],
        );
        Ok(manuscript)
    }

    pub fn invite_collaborator(
        &self,
        session: &Session,
        document_id: &DocumentId,
        invitee_email: &str,
        invitee_name: &str,
    ) -> Result<RoleGrant> {
        let email = Email::parse(invitee_email)?;
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        if self.role_on(&entry, session)? != RoleKind::Author {
            return Err(Error::NotAuthor);
        }
        let (user_id, created) = self.accounts.write().ensure(&self.ids, &email, invitee_name)?;
        let outcome = entry.grants.grant_role(
            &user_id,
            document_id,
            RoleKind::Author,
            self.clock.now(),
        );
        if created {
            self.record(session.user_id.to_string(), "account.created", vec![user_id.to_string()]);
        }
        if outcome? == GrantOutcome::Created {
            self.record(
                session.user_id.to_string(),
                "collaborator.invited",
                vec![document_id.to_string(), user_id.to_string()],
            );
        }
        let grant = entry
            .grants
            .iter()
            .find(|g| g.user_id == user_id)
            .cloned()
            .expect("grant exists after grant_role");
        Ok(grant)
    }

    pub fn apply_edit(
        &self,
        session: &Session,
        document_id: &DocumentId,
        base_revision: u64,
        ops: &[BlockOp],
    ) -> Result<Manuscript> {
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        match self.role_on(&entry, session)? {
            RoleKind::Author | RoleKind::Admin => {}
            _ => return Err(Error::NotAuthorized),
        }
        let current = entry.manuscript.revision;
        if base_revision != current {
            return Err(Error::StaleRevision {
                base: base_revision,
                current,
            });
        }
        if ops.is_empty() {
            return Err(Error::Invalid("an edit needs at least one block operation".into()));
        }
        let mut next = entry.manuscript.with_ops(ops)?;
        next.revision = current + 1;
        let mut orphaned = Vec::new();
        for c in entry.comments.iter_mut().filter(|c| !c.orphaned) {
            if !c.anchor.resolves(&next) {
                c.orphaned = true;
                orphaned.push(c.comment_id.to_string());
            }
        }
        entry.manuscript = next.clone();
        self.record(
            session.user_id.to_string(),
            "document.edited",
            vec![document_id.to_string(), format!("revision:{}", next.revision)],
        );
        for c in orphaned {
            self.record("system", "comment.orphaned", vec![document_id.to_string(), c]);
        }
        Ok(next)
    }

    pub fn add_comment(
        &self,
        session: &Session,
        document_id: &DocumentId,
        anchor: Anchor,
        body: &str,
        audience: Option<Audience>,
    ) -> Result<Comment> {
        let body = body.trim();
        if body.is_empty() {
            return Err(Error::Invalid("comment body must not be empty".into()));
        }
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        let role = self.role_on(&entry, session)?;
        anchor.check(&entry.manuscript)?;
        let (visibility, audience) = match role {
            RoleKind::Reviewer => (VisibilityState::Pending, None),
            RoleKind::Editor | RoleKind::Admin => {
                (VisibilityState::Approved, Some(audience.unwrap_or_default()))
            }
            RoleKind::Author => (VisibilityState::Approved, None),
        };
        let comment = Comment {
            comment_id: self.ids.comment(),
            document_id: document_id.clone(),
            anchor,
            author_id: session.user_id.clone(),
            author_role_at_creation: role,
            body: body.to_string(),
            visibility,
            audience,
            created_at: self.clock.now(),
            orphaned: false,
        };
        entry.comments.push(comment.clone());
        self.record(
            session.user_id.to_string(),
            "comment.added",
            vec![document_id.to_string(), comment.comment_id.to_string()],
        );
        Ok(comment)
    }

    pub fn approve_comment(
        &self,
        session: &Session,
        document_id: &DocumentId,
        comment_id: &CommentId,
    ) -> Result<Comment> {
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        let role = self.role_on(&entry, session)?;
        let comment = entry
            .comments
            .iter_mut()
            .find(|c| &c.comment_id == comment_id)
            .ok_or_else(|| Error::not_found("comment", comment_id))?;
        if permissions::approve_comment(role, comment)? == ApproveOutcome::Approved {
            let approved = comment.clone();
            self.record(
                session.user_id.to_string(),
                "comment.approved",
                vec![document_id.to_string(), comment_id.to_string()],
            );
            return Ok(approved);
        }
        Ok(comment.clone())
    }

    /// The manuscript as `session` may see it: only visible comments, names
    /// masked according to the journal's blind mode.
    pub fn get_document(&self, session: &Session, document_id: &DocumentId) -> Result<DocumentView> {
        let entry = self.entry(document_id)?;
        let entry = entry.lock();
        let viewer_role = self.role_on(&entry, session)?;
        let accounts = self.accounts.read();
        let comments = entry
            .comments
            .iter()
            .filter(|c| comment_visible(viewer_role, &session.user_id, c))
            .map(|c| {
                let name = accounts.name(&c.author_id);
                let subject = Subject {
                    role: c.author_role_at_creation,
                    name: &name,
                    reviewer_number: entry.reviewer_numbers.get(&c.author_id).copied(),
                };
                CommentView {
                    comment_id: c.comment_id.clone(),
                    anchor: c.anchor.clone(),
                    author: display_identity(viewer_role, subject, entry.blind_mode),
                    author_role: c.author_role_at_creation,
                    body: c.body.clone(),
                    visibility: c.visibility,
                    audience: c.audience.clone(),
                    orphaned: c.orphaned,
                    created_at: c.created_at,
                }
            })
            .collect();
        Ok(DocumentView {
            document_id: document_id.clone(),
            title: entry.manuscript.title.clone(),
            revision: entry.manuscript.revision,
            viewer_role,
            blocks: entry.manuscript.blocks.clone(),
            comments,
            submission: entry.submission.clone(),
        })
    }

    pub fn list_documents(&self, session: &Session) -> Vec<DocumentListing> {
        let entries: Vec<_> = self.documents.read().values().cloned().collect();
        entries
            .iter()
            .filter_map(|entry| {
                let entry = entry.lock();
                let role = self.role_on(&entry, session).ok()?;
                Some(DocumentListing {
                    document_id: entry.manuscript.document_id.clone(),
                    title: entry.manuscript.title.clone(),
                    role,
                    submission_state: entry.submission.as_ref().map(|s| s.state.to_string()),
                })
            })
            .collect()
    }

    pub fn export_snapshot(&self, document_id: &DocumentId) -> Result<Snapshot> {
        let entry = self.entry(document_id)?;
        let manuscript = entry.lock().manuscript.clone();
        Ok(snapshot_of(&manuscript))
    }

    /// Snapshot export for a caller; requires any grant on the document.
    pub fn export_snapshot_as(&self, session: &Session, document_id: &DocumentId) -> Result<Snapshot> {
        let entry = self.entry(document_id)?;
        let entry = entry.lock();
        self.role_on(&entry, session)?;
        Ok(snapshot_of(&entry.manuscript))
    }

    /// Creates a new document (revision 0) from canonical bytes.
    pub fn import_manuscript(&self, session: &Session, canonical: &[u8]) -> Result<Manuscript> {
        let parsed = CanonicalManuscript::parse(canonical)?;
        self.insert_document(session, parsed.title, parsed.blocks, "document.imported")
    }

    // ---- submission to a journal ----

    fn bridge(&self) -> Result<&Courier> {
        self.courier
            .get()
            .ok_or_else(|| Error::Invalid("bridge is not connected".into()))
    }

    pub fn submit_document(
        &self,
        session: &Session,
        document_id: &DocumentId,
        journal_id: &JournalId,
    ) -> Result<SubmissionLink> {
        let payload = {
            let entry = self.entry(document_id)?;
            let entry = entry.lock();
            if self.role_on(&entry, session)? != RoleKind::Author {
                return Err(Error::NotAuthor);
            }
            if let Some(link) = &entry.submission {
                return Err(Error::illegal(link.state, "Submit"));
            }
            let accounts = self.accounts.read();
            let me = accounts
                .users
                .get(&session.user_id)
                .ok_or(Error::Unauthenticated)?;
            let co_author_emails = entry
                .grants
                .iter()
                .filter(|g| g.role == RoleKind::Author && g.user_id != session.user_id)
                .filter_map(|g| accounts.users.get(&g.user_id))
                .map(|u| u.email.to_string())
                .collect();
            SubmitDocument {
                document_id: document_id.clone(),
                journal_id: journal_id.clone(),
                title: entry.manuscript.title.clone(),
                snapshot_hash: entry.manuscript.canonical().content_hash(),
                corresponding_author_email: me.email.to_string(),
                author_name: me.display_name.clone(),
                co_author_emails,
            }
        };
        let report = self.bridge()?.send(MessageKind::SubmitDocument, &payload)?;
        let result = &report.result;
        let link = SubmissionLink {
            submission_id: SubmissionId(str_field(result, "submission_id")?),
            journal_id: journal_id.clone(),
            state: serde_json::from_value(result["state"].clone())
                .map_err(|e| Error::MalformedMessage(e.to_string()))?,
            last_decision: None,
            snapshot_hash: payload.snapshot_hash,
        };
        let blind_mode: BlindMode =
            serde_json::from_value(result["blind_mode"].clone()).unwrap_or_default();
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        entry.blind_mode = blind_mode;
        if entry.submission.is_none() {
            entry.submission = Some(link.clone());
            self.record(
                session.user_id.to_string(),
                "document.submitted",
                vec![document_id.to_string(), link.submission_id.to_string()],
            );
        }
        Ok(entry.submission.clone().unwrap_or(link))
    }

    pub fn resubmit_document(&self, session: &Session, document_id: &DocumentId) -> Result<SubmissionLink> {
        let payload = {
            let entry = self.entry(document_id)?;
            let entry = entry.lock();
            if self.role_on(&entry, session)? != RoleKind::Author {
                return Err(Error::NotAuthor);
            }
            let link = entry
                .submission
                .as_ref()
                .ok_or_else(|| Error::illegal(SubmissionState::Draft, "Resubmit"))?;
            let SubmissionState::Revising { round } = link.state else {
                return Err(Error::illegal(link.state, "Resubmit"));
            };
            Resubmission {
                submission_id: link.submission_id.clone(),
                document_id: document_id.clone(),
                round_index: round + 1,
                snapshot_hash: entry.manuscript.canonical().content_hash(),
            }
        };
        let report = self.bridge()?.send(MessageKind::Resubmission, &payload)?;
        let state: SubmissionState = serde_json::from_value(report.result["state"].clone())
            .map_err(|e| Error::MalformedMessage(e.to_string()))?;
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        let link = entry
            .submission
            .as_mut()
            .expect("submission link checked above");
        if matches!(link.state, SubmissionState::Revising { .. }) {
            link.state = state;
            link.snapshot_hash = payload.snapshot_hash;
            let link = link.clone();
            self.record(
                session.user_id.to_string(),
                "document.resubmitted",
                vec![
                    document_id.to_string(),
                    link.submission_id.to_string(),
                    format!("round:{}", payload.round_index),
                ],
            );
            return Ok(link);
        }
        Ok(link.clone())
    }

    // ---- bridge and SSO ----

    /// Entry point for signed messages from the review service.
    pub fn receive_bridge(&self, request: &BridgeRequest) -> Result<Ack> {
        let secret = self.secret.clone();
        self.inbox.receive(&secret, request, |message| match request.endpoint {
            Endpoint::DocAccounts => {
                let p: ReviewerAssigned = message.decode()?;
                let user_id = self.ensure_account(
                    &p.reviewer_email,
                    &p.reviewer_name,
                    &p.document_id,
                    RoleKind::Reviewer,
                    Some((p.reviewer_number, p.blind_mode)),
                )?;
                Ok(json!({ "user_id": user_id }))
            }
            Endpoint::DocDecisions => {
                let p: DecisionRelayed = message.decode()?;
                self.apply_decision(&p)?;
                Ok(json!({ "document_id": p.document_id }))
            }
            other => Err(Error::MalformedMessage(format!(
                "{} is not served here",
                other.path()
            ))),
        })
    }

    /// Creates the account if the email is unknown and grants `role` on the
    /// document. Replaying the same call changes nothing.
    pub fn ensure_account(
        &self,
        email: &str,
        display_name: &str,
        document_id: &DocumentId,
        role: RoleKind,
        reviewer: Option<(u32, BlindMode)>,
    ) -> Result<UserId> {
        let email = Email::parse(email)?;
        let entry = self.entry(document_id)?;
        let mut entry = entry.lock();
        let mut accounts = self.accounts.write();
        if let Some(existing) = accounts.by_email.get(&email) {
            if let Some(held) = entry.grants.role_of(existing, document_id) {
                if held != role {
                    return Err(Error::RoleConflict {
                        existing: held,
                        requested: role,
                    });
                }
            }
        }
        let (user_id, created) = accounts.ensure(&self.ids, &email, display_name)?;
        drop(accounts);
        if created {
            self.record(BRIDGE_ACTOR, "account.created", vec![user_id.to_string()]);
        }
        let outcome = entry
            .grants
            .grant_role(&user_id, document_id, role, self.clock.now())?;
        if let Some((number, mode)) = reviewer {
            entry.reviewer_numbers.insert(user_id.clone(), number);
            entry.blind_mode = mode;
        }
        if outcome == GrantOutcome::Created {
            self.record(
                BRIDGE_ACTOR,
                "role.granted",
                vec![document_id.to_string(), user_id.to_string(), format!("{role:?}")],
            );
        }
        Ok(user_id)
    }

    fn apply_decision(&self, p: &DecisionRelayed) -> Result<()> {
        let entry = self.entry(&p.document_id)?;
        let mut entry = entry.lock();
        let link = entry
            .submission
            .as_mut()
            .filter(|l| l.submission_id == p.submission_id)
            .ok_or_else(|| Error::not_found("submission", &p.submission_id))?;
        link.state = p.state;
        link.last_decision = Some(p.decision);
        self.record(
            BRIDGE_ACTOR,
            "decision.relayed",
            vec![
                p.document_id.to_string(),
                p.submission_id.to_string(),
                format!("{:?}", p.decision),
            ],
        );
        Ok(())
    }

    /// Redeems a one-time login link minted by the review service.
    pub fn consume_sso_token(&self, token: &str) -> Result<Session> {
        let claims = SsoToken::verify(&self.secret, token)?;
        if claims.is_expired(self.clock.now()) {
            return Err(Error::TokenExpired);
        }
        let entry = self.entry(&claims.document_id)?;
        let entry = entry.lock();
        let mut spent = self.spent_nonces.lock();
        if spent.contains(&claims.nonce) {
            return Err(Error::TokenReplayed);
        }
        let user_id = self
            .accounts
            .read()
            .by_email
            .get(&claims.email)
            .cloned()
            .ok_or_else(|| Error::NoGrant(claims.document_id.to_string()))?;
        let scoped = Session {
            token: String::new(),
            user_id: user_id.clone(),
            scope: Some(claims.document_id.clone()),
        };
        if self.role_on(&entry, &scoped)? != claims.role {
            return Err(Error::NoGrant(claims.document_id.to_string()));
        }
        spent.insert(claims.nonce.clone());
        drop(spent);
        drop(entry);
        self.record(
            user_id.to_string(),
            "sso.consumed",
            vec![claims.document_id.to_string()],
        );
        Ok(self.open_session(user_id, Some(claims.document_id)))
    }
}

fn snapshot_of(manuscript: &Manuscript) -> Snapshot {
    let canonical = manuscript.canonical();
    let bytes = canonical.to_bytes();
    Snapshot {
        document_id: manuscript.document_id.clone(),
        revision: manuscript.revision,
        content_hash: crate::canonical::sha256_hex(&bytes),
        canonical: String::from_utf8(bytes).expect("canonical form is UTF-8"),
    }
}

fn str_field(v: &Value, name: &str) -> Result<String> {
    v[name]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedMessage(format!("ack is missing {name}")))
}
