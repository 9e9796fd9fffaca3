//! Domain types and the pure state machines for submissions and reviewer
//! assignments. Nothing in here performs I/O or reads a clock.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::ids::{AssignmentId, DocumentId, SubmissionId, UserId};

/// A normalized (trimmed, lowercased) email address. Both services join
/// accounts on this value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Email(String);

impl Email {
    pub fn parse(raw: &str) -> Result<Self> {
        let normalized = raw.trim().to_lowercase();
        let Some((local, domain)) = normalized.split_once('@') else {
            return Err(Error::InvalidEmail(raw.to_string()));
        };
        let shaped = !local.is_empty()
            && !domain.is_empty()
            && !domain.contains('@')
            && !domain.starts_with('.')
            && !domain.ends_with('.')
            && !normalized.chars().any(char::is_whitespace);
        if !shaped {
            return Err(Error::InvalidEmail(raw.to_string()));
        }
        Ok(Email(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Email {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Email::parse(&value)
    }
}

impl From<Email> for String {
    fn from(e: Email) -> String {
        e.0
    }
}

impl fmt::Display for Email {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserIdentity {
    pub user_id: UserId,
    pub email: Email,
    pub display_name: String,
}

impl UserIdentity {
    pub fn new(user_id: UserId, email: Email, display_name: &str) -> Result<Self> {
        let display_name = display_name.trim();
        if display_name.is_empty() {
            return Err(Error::EmptyName);
        }
        Ok(Self {
            user_id,
            email,
            display_name: display_name.to_string(),
        })
    }
}

/// Roles across both services. `Editor` exists only on the review side and
/// `Admin` only on the document side; see [`crate::permissions::map_role`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleKind {
    Author,
    Reviewer,
    Editor,
    Admin,
}

impl RoleKind {
    /// Editor on the review side and Admin on the document side hold the same
    /// editorial powers.
    pub fn is_editorial(self) -> bool {
        matches!(self, RoleKind::Editor | RoleKind::Admin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleGrant {
    pub user_id: UserId,
    pub document_id: DocumentId,
    pub role: RoleKind,
    pub granted_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
    RequestRevision,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditorDecision {
    pub decision: Decision,
    #[serde(default)]
    pub rationale: String,
}

impl EditorDecision {
    pub fn new(decision: Decision, rationale: impl Into<String>) -> Self {
        Self {
            decision,
            rationale: rationale.into(),
        }
    }
}

/// Lifecycle of one manuscript on the review side.
///
/// `Submitted` remembers how many rounds have already completed, so opening
/// the next round needs no outside information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubmissionState {
    Draft,
    Submitted { completed_rounds: u32 },
    UnderReview { round: u32 },
    Revising { round: u32 },
    Accepted,
    Rejected,
}

impl SubmissionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SubmissionState::Accepted | SubmissionState::Rejected)
    }

    pub fn round(self) -> Option<u32> {
        match self {
            SubmissionState::UnderReview { round } | SubmissionState::Revising { round } => {
                Some(round)
            }
            _ => None,
        }
    }

    /// Every state with round index up to `max_round`; used by exhaustive tests.
    pub fn enumerate(max_round: u32) -> Vec<SubmissionState> {
        let mut all = vec![
            SubmissionState::Draft,
            SubmissionState::Accepted,
            SubmissionState::Rejected,
        ];
        for n in 0..=max_round {
            all.push(SubmissionState::Submitted { completed_rounds: n });
        }
        for n in 1..=max_round {
            all.push(SubmissionState::UnderReview { round: n });
            all.push(SubmissionState::Revising { round: n });
        }
        all
    }
}

impl fmt::Display for SubmissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubmissionState::Draft => f.write_str("Draft"),
            SubmissionState::Submitted { .. } => f.write_str("Submitted"),
            SubmissionState::UnderReview { round } => write!(f, "UnderReview({round})"),
            SubmissionState::Revising { round } => write!(f, "Revising({round})"),
            SubmissionState::Accepted => f.write_str("Accepted"),
            SubmissionState::Rejected => f.write_str("Rejected"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubmissionEvent {
    Submit,
    OpenRound,
    Decide(EditorDecision),
    Resubmit,
}

impl SubmissionEvent {
    pub fn all() -> Vec<SubmissionEvent> {
        vec![
            SubmissionEvent::Submit,
            SubmissionEvent::OpenRound,
            SubmissionEvent::Decide(EditorDecision::new(Decision::Accept, "")),
            SubmissionEvent::Decide(EditorDecision::new(Decision::Reject, "")),
            SubmissionEvent::Decide(EditorDecision::new(Decision::RequestRevision, "")),
            SubmissionEvent::Resubmit,
        ]
    }
}

pub fn advance_submission(
    current: SubmissionState,
    event: &SubmissionEvent,
) -> Result<SubmissionState> {
    use SubmissionEvent as E;
    use SubmissionState as S;

    let next = match (current, event) {
        (S::Draft, E::Submit) => S::Submitted { completed_rounds: 0 },
        (S::Submitted { completed_rounds }, E::OpenRound) => S::UnderReview {
            round: completed_rounds + 1,
        },
        (S::UnderReview { round }, E::Decide(d)) => match d.decision {
            Decision::Accept => S::Accepted,
            Decision::Reject => S::Rejected,
            Decision::RequestRevision => S::Revising { round },
        },
        (S::Revising { round }, E::Resubmit) => S::Submitted {
            completed_rounds: round,
        },
        (state, event) => return Err(Error::illegal(state, event)),
    };
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignmentState {
    Invited,
    Accepted,
    Declined,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentEvent {
    Accept,
    Decline,
    SubmitReview {
        feedback: String,
        recommendation: Option<Decision>,
    },
}

pub fn advance_assignment(
    current: AssignmentState,
    event: &AssignmentEvent,
) -> Result<AssignmentState> {
    use AssignmentEvent as E;
    use AssignmentState as S;

    match (current, event) {
        (S::Invited, E::Accept) => Ok(S::Accepted),
        (S::Invited, E::Decline) => Ok(S::Declined),
        (S::Accepted, E::SubmitReview { feedback, .. }) => {
            if feedback.trim().is_empty() {
                Err(Error::MissingFeedback)
            } else {
                Ok(S::Submitted)
            }
        }
        (state, event) => Err(Error::illegal(state, event)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAssignment {
    pub assignment_id: AssignmentId,
    pub submission_id: SubmissionId,
    pub round_index: u32,
    /// 1-based position within the round; drives "Reviewer N" masking.
    pub reviewer_number: u32,
    pub reviewer: UserIdentity,
    pub state: AssignmentState,
    pub general_feedback: Option<String>,
    pub recommendation: Option<Decision>,
}

impl ReviewAssignment {
    /// Runs the assignment machine, keeping feedback present exactly when the
    /// state is `Submitted`.
    pub fn apply(&mut self, event: AssignmentEvent) -> Result<AssignmentState> {
        let next = advance_assignment(self.state, &event)?;
        if let AssignmentEvent::SubmitReview {
            feedback,
            recommendation,
        } = event
        {
            self.general_feedback = Some(feedback.trim().to_string());
            self.recommendation = recommendation;
        }
        self.state = next;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRound {
    pub round_index: u32,
    pub assignments: Vec<ReviewAssignment>,
    pub opened_at: Timestamp,
    pub closed_by: Option<EditorDecision>,
}

impl ReviewRound {
    pub fn open(round_index: u32, opened_at: Timestamp) -> Self {
        Self {
            round_index,
            assignments: Vec::new(),
            opened_at,
            closed_by: None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.closed_by.is_none()
    }

    pub fn submitted(&self) -> impl Iterator<Item = &ReviewAssignment> {
        self.assignments
            .iter()
            .filter(|a| a.state == AssignmentState::Submitted)
    }

    pub fn close(&mut self, decision: EditorDecision) -> Result<()> {
        if self.closed_by.is_some() {
            return Err(Error::Invalid(format!(
                "round {} is already closed",
                self.round_index
            )));
        }
        self.closed_by = Some(decision);
        Ok(())
    }
}

/// Editors may decide on any open round, including one without any
/// submitted reviews. Closed rounds answer `false`; callers treat that as a
/// precondition failure.
pub fn decision_allowed(round: &ReviewRound) -> bool {
    round.is_open()
}

pub const BRIDGE_ACTOR: &str = "bridge";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub actor: String,
    pub action: String,
    pub subjects: Vec<String>,
    pub at: Timestamp,
}

/// Append-only audit trail with dense sequence numbers starting at 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn append(
        &mut self,
        actor: impl Into<String>,
        action: &str,
        subjects: Vec<String>,
        at: Timestamp,
    ) -> u64 {
        let seq = self.records.len() as u64 + 1;
        self.records.push(EventRecord {
            seq,
            actor: actor.into(),
            action: action.to_string(),
            subjects,
            at,
        });
        seq
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn decide(d: Decision) -> SubmissionEvent {
        SubmissionEvent::Decide(EditorDecision::new(d, ""))
    }

    #[test]
    fn email_is_normalized() {
        let e = Email::parse("  Ana@Uni.Example ").unwrap();
        assert_eq!(e.as_str(), "ana@uni.example");
        for bad in ["", "ana", "@x.org", "ana@", "a b@x.org", "ana@x@y", "ana@.org"] {
            assert!(Email::parse(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn submit_from_draft() {
        assert_eq!(
            advance_submission(SubmissionState::Draft, &SubmissionEvent::Submit).unwrap(),
            SubmissionState::Submitted { completed_rounds: 0 }
        );
    }

    #[test]
    fn second_round_follows_revision() {
        let mut s = SubmissionState::UnderReview { round: 1 };
        for e in [
            decide(Decision::RequestRevision),
            SubmissionEvent::Resubmit,
            SubmissionEvent::OpenRound,
        ] {
            s = advance_submission(s, &e).unwrap();
        }
        assert_eq!(s, SubmissionState::UnderReview { round: 2 });
    }

    #[test]
    fn terminal_states_reject_everything() {
        for terminal in [SubmissionState::Accepted, SubmissionState::Rejected] {
            for e in SubmissionEvent::all() {
                let err = advance_submission(terminal, &e).unwrap_err();
                assert_eq!(err.class(), "IllegalTransition");
            }
        }
        let err = advance_submission(SubmissionState::Draft, &decide(Decision::Accept)).unwrap_err();
        assert_eq!(err.class(), "IllegalTransition");
    }

    /// The legal-transition table written out as data, independent of the
    /// `match` in `advance_submission`.
    fn table_successor(s: SubmissionState, e: &SubmissionEvent) -> Option<SubmissionState> {
        let event_name = match e {
            SubmissionEvent::Submit => "Submit",
            SubmissionEvent::OpenRound => "OpenRound",
            SubmissionEvent::Resubmit => "Resubmit",
            SubmissionEvent::Decide(d) => match d.decision {
                Decision::Accept => "Accept",
                Decision::Reject => "Reject",
                Decision::RequestRevision => "RequestRevision",
            },
        };
        let table: &[(&str, &str, &str)] = &[
            ("Draft", "Submit", "Submitted(+0)"),
            ("Submitted", "OpenRound", "UnderReview(+1)"),
            ("UnderReview", "Accept", "Accepted"),
            ("UnderReview", "Reject", "Rejected"),
            ("UnderReview", "RequestRevision", "Revising(=)"),
            ("Revising", "Resubmit", "Submitted(=)"),
        ];
        let (kind, n) = match s {
            SubmissionState::Draft => ("Draft", 0),
            SubmissionState::Submitted { completed_rounds } => ("Submitted", completed_rounds),
            SubmissionState::UnderReview { round } => ("UnderReview", round),
            SubmissionState::Revising { round } => ("Revising", round),
            SubmissionState::Accepted => ("Accepted", 0),
            SubmissionState::Rejected => ("Rejected", 0),
        };
        let (_, _, to) = table.iter().find(|(from, ev, _)| *from == kind && *ev == event_name)?;
        Some(match *to {
            "Submitted(+0)" => SubmissionState::Submitted { completed_rounds: 0 },
            "UnderReview(+1)" => SubmissionState::UnderReview { round: n + 1 },
            "Accepted" => SubmissionState::Accepted,
            "Rejected" => SubmissionState::Rejected,
            "Revising(=)" => SubmissionState::Revising { round: n },
            "Submitted(=)" => SubmissionState::Submitted { completed_rounds: n },
            _ => unreachable!(),
        })
    }

    #[test]
    fn exhaustive_state_event_product() {
        let mut legal = 0;
        for s in SubmissionState::enumerate(6) {
            for e in SubmissionEvent::all() {
                match (advance_submission(s, &e), table_successor(s, &e)) {
                    (Ok(got), Some(want)) => {
                        assert_eq!(got, want, "{s:?} + {e:?}");
                        legal += 1;
                    }
                    (Err(err), None) => assert_eq!(err.class(), "IllegalTransition"),
                    (got, want) => panic!("{s:?} + {e:?}: got {got:?}, table says {want:?}"),
                }
            }
        }
        // Draft+Submit, 7 Submitted+OpenRound, 6*3 decisions, 6 Revising+Resubmit
        assert_eq!(legal, 1 + 7 + 18 + 6);
    }

    /// Reachability oracle: tracks, for every state reached by a word, the
    /// path of states it went through; UnderReview(n+1) must be preceded by
    /// Revising(n) and then Submitted.
    #[test]
    fn next_round_only_after_revision_brute_force() {
        let events = SubmissionEvent::all();
        let mut queue: VecDeque<(SubmissionState, Vec<SubmissionState>)> =
            VecDeque::from([(SubmissionState::Draft, vec![SubmissionState::Draft])]);
        let mut words = 0usize;
        while let Some((state, path)) = queue.pop_front() {
            words += 1;
            if path.len() > 8 {
                continue;
            }
            for e in &events {
                let Ok(next) = advance_submission(state, e) else {
                    continue;
                };
                if let SubmissionState::UnderReview { round } = next {
                    if round > 1 {
                        let k = path.len();
                        assert!(k >= 2);
                        assert_eq!(path[k - 1], SubmissionState::Submitted { completed_rounds: round - 1 });
                        assert_eq!(path[k - 2], SubmissionState::Revising { round: round - 1 });
                    }
                }
                let prev_round = path.iter().filter_map(|s| s.round()).max().unwrap_or(0);
                if let Some(r) = next.round() {
                    assert!(r >= prev_round, "round index decreased along {path:?} -> {next:?}");
                }
                let mut p = path.clone();
                p.push(next);
                queue.push_back((next, p));
            }
        }
        assert!(words > 8);
    }

    #[test]
    fn assignment_machine() {
        use AssignmentEvent as E;
        use AssignmentState as S;
        assert_eq!(advance_assignment(S::Invited, &E::Accept).unwrap(), S::Accepted);
        assert_eq!(advance_assignment(S::Invited, &E::Decline).unwrap(), S::Declined);
        let review = E::SubmitReview {
            feedback: "major issues in method".into(),
            recommendation: Some(Decision::RequestRevision),
        };
        assert_eq!(advance_assignment(S::Accepted, &review).unwrap(), S::Submitted);
        assert_eq!(
            advance_assignment(S::Declined, &review).unwrap_err().class(),
            "IllegalTransition"
        );
        assert_eq!(
            advance_assignment(S::Invited, &review).unwrap_err().class(),
            "IllegalTransition"
        );
        let empty = E::SubmitReview {
            feedback: "  ".into(),
            recommendation: None,
        };
        assert_eq!(advance_assignment(S::Accepted, &empty).unwrap_err(), Error::MissingFeedback);

        let mut legal = HashSet::new();
        for s in [S::Invited, S::Accepted, S::Declined, S::Submitted] {
            for e in [E::Accept, E::Decline, review.clone()] {
                if advance_assignment(s, &e).is_ok() {
                    legal.insert(format!("{s:?}/{e:?}"));
                }
            }
        }
        assert_eq!(legal.len(), 3);
    }

    #[test]
    fn feedback_present_iff_submitted() {
        let mut a = ReviewAssignment {
            assignment_id: "asg-1".into(),
            submission_id: "sub-1".into(),
            round_index: 1,
            reviewer_number: 1,
            reviewer: UserIdentity::new("usr-1".into(), Email::parse("r@x.org").unwrap(), "R").unwrap(),
            state: AssignmentState::Invited,
            general_feedback: None,
            recommendation: None,
        };
        a.apply(AssignmentEvent::Accept).unwrap();
        assert!(a.general_feedback.is_none());
        assert!(a
            .apply(AssignmentEvent::SubmitReview { feedback: "".into(), recommendation: None })
            .is_err());
        assert!(a.general_feedback.is_none());
        a.apply(AssignmentEvent::SubmitReview {
            feedback: "fine".into(),
            recommendation: Some(Decision::Accept),
        })
        .unwrap();
        assert_eq!(a.general_feedback.as_deref(), Some("fine"));
        assert_eq!(a.recommendation, Some(Decision::Accept));
    }

    #[test]
    fn decisions_allowed_on_open_rounds_only() {
        let mut round = ReviewRound::open(1, Timestamp(0));
        assert!(decision_allowed(&round));
        round.close(EditorDecision::new(Decision::Reject, "")).unwrap();
        assert!(!decision_allowed(&round));
        assert!(round.close(EditorDecision::new(Decision::Accept, "")).is_err());
    }

    #[test]
    fn event_log_is_dense() {
        let mut log = EventLog::default();
        for i in 0..5 {
            assert_eq!(log.append("a", "x", vec![], Timestamp(i)), i + 1);
        }
        let seqs: Vec<u64> = log.records().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    }
}
