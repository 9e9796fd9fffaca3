//! Role mapping between the two services, per-document grants, the comment
//! visibility matrix and blind-review identity masking.

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::docs::Comment;
use crate::error::{Error, Result};
use crate::ids::{DocumentId, UserId};
use crate::model::{RoleGrant, RoleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServiceSide {
    DocumentService,
    ReviewService,
}

impl ServiceSide {
    pub fn other(self) -> ServiceSide {
        match self {
            ServiceSide::DocumentService => ServiceSide::ReviewService,
            ServiceSide::ReviewService => ServiceSide::DocumentService,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ServiceSide::DocumentService => "document",
            ServiceSide::ReviewService => "review",
        }
    }
}

/// Reviewer comments start `Pending` and become visible to authors once an
/// editor approves them. Everything else is born `Approved`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VisibilityState {
    Pending,
    Approved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BlindMode {
    #[default]
    Open,
    SingleBlind,
    DoubleBlind,
}

/// Who an editor comment is addressed to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Audience {
    AllParticipants,
    #[default]
    AuthorsOnly,
    Reviewer(UserId),
}

pub fn role_valid_on(side: ServiceSide, role: RoleKind) -> bool {
    match side {
        ServiceSide::ReviewService => role != RoleKind::Admin,
        ServiceSide::DocumentService => role != RoleKind::Editor,
    }
}

/// Translates a role held on `from` into the equivalent role on the other
/// service: Author and Reviewer keep their names, Editor and Admin swap.
pub fn map_role(from: ServiceSide, role: RoleKind) -> Result<RoleKind> {
    if !role_valid_on(from, role) {
        return Err(Error::UnknownRole {
            side: from.label(),
            role,
        });
    }
    Ok(match role {
        RoleKind::Author => RoleKind::Author,
        RoleKind::Reviewer => RoleKind::Reviewer,
        RoleKind::Editor => RoleKind::Admin,
        RoleKind::Admin => RoleKind::Editor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantOutcome {
    Created,
    Unchanged,
}

/// Role grants in the order they were made. A user holds at most one role
/// per document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grants(Vec<RoleGrant>);

impl Grants {
    pub fn role_of(&self, user: &UserId, document: &DocumentId) -> Option<RoleKind> {
        self.0
            .iter()
            .find(|g| &g.user_id == user && &g.document_id == document)
            .map(|g| g.role)
    }

    pub fn grant_role(
        &mut self,
        user: &UserId,
        document: &DocumentId,
        role: RoleKind,
        at: Timestamp,
    ) -> Result<GrantOutcome> {
        if !role_valid_on(ServiceSide::DocumentService, role) {
            return Err(Error::UnknownRole {
                side: ServiceSide::DocumentService.label(),
                role,
            });
        }
        match self.role_of(user, document) {
            Some(existing) if existing == role => Ok(GrantOutcome::Unchanged),
            Some(existing) => Err(Error::RoleConflict {
                existing,
                requested: role,
            }),
            None => {
                self.0.push(RoleGrant {
                    user_id: user.clone(),
                    document_id: document.clone(),
                    role,
                    granted_at: at,
                });
                Ok(GrantOutcome::Created)
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &RoleGrant> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Whether `viewer` (holding `viewer_role` on the comment's document) may see
/// `comment`.
///
/// * editors see everything, and everyone sees their own comments;
/// * authors see author comments, approved reviewer comments and editor
///   comments addressed to authors;
/// * reviewers see neither other reviewers' nor authors' comments, only
///   editor comments addressed to everyone or to them.
pub fn comment_visible(viewer_role: RoleKind, viewer: &UserId, comment: &Comment) -> bool {
    if viewer_role.is_editorial() || &comment.author_id == viewer {
        return true;
    }
    let author_role = comment.author_role_at_creation;
    match viewer_role {
        RoleKind::Author => match author_role {
            RoleKind::Author => true,
            RoleKind::Reviewer => comment.visibility == VisibilityState::Approved,
            RoleKind::Editor | RoleKind::Admin => matches!(
                comment.audience,
                Some(Audience::AllParticipants) | Some(Audience::AuthorsOnly) | None
            ),
        },
        RoleKind::Reviewer => match author_role {
            RoleKind::Author | RoleKind::Reviewer => false,
            RoleKind::Editor | RoleKind::Admin => match &comment.audience {
                Some(Audience::AllParticipants) => true,
                Some(Audience::Reviewer(id)) => id == viewer,
                Some(Audience::AuthorsOnly) | None => false,
            },
        },
        RoleKind::Editor | RoleKind::Admin => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproveOutcome {
    Approved,
    AlreadyApproved,
}

/// Releases a pending reviewer comment to the authors.
pub fn approve_comment(actor_role: RoleKind, comment: &mut Comment) -> Result<ApproveOutcome> {
    if !actor_role.is_editorial() {
        return Err(Error::NotEditor);
    }
    match comment.visibility {
        VisibilityState::Approved => Ok(ApproveOutcome::AlreadyApproved),
        VisibilityState::Pending => {
            comment.visibility = VisibilityState::Approved;
            Ok(ApproveOutcome::Approved)
        }
    }
}

/// The person whose name is about to be shown.
#[derive(Debug, Clone, Copy)]
pub struct Subject<'a> {
    pub role: RoleKind,
    pub name: &'a str,
    /// Position of a reviewer within the round, if the subject is one.
    pub reviewer_number: Option<u32>,
}

pub fn display_identity(viewer_role: RoleKind, subject: Subject<'_>, mode: BlindMode) -> String {
    if viewer_role.is_editorial() {
        return subject.name.to_string();
    }
    let hide_reviewer = matches!(mode, BlindMode::SingleBlind | BlindMode::DoubleBlind)
        && viewer_role == RoleKind::Author
        && subject.role == RoleKind::Reviewer;
    let hide_author = mode == BlindMode::DoubleBlind
        && viewer_role == RoleKind::Reviewer
        && subject.role == RoleKind::Author;
    if hide_reviewer {
        format!("Reviewer {}", subject.reviewer_number.unwrap_or(1))
    } else if hide_author {
        "Author".to_string()
    } else {
        subject.name.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docs::Anchor;
    use crate::ids::{BlockId, CommentId};
    use proptest::prelude::*;

    const SIDES: [ServiceSide; 2] = [ServiceSide::DocumentService, ServiceSide::ReviewService];

    #[test]
    fn role_table() {
        use RoleKind::*;
        use ServiceSide::*;
        assert_eq!(map_role(ReviewService, Editor).unwrap(), Admin);
        assert_eq!(map_role(ReviewService, Author).unwrap(), Author);
        assert_eq!(map_role(ReviewService, Reviewer).unwrap(), Reviewer);
        assert_eq!(map_role(DocumentService, Admin).unwrap(), Editor);
        assert_eq!(
            map_role(DocumentService, map_role(ReviewService, Reviewer).unwrap()).unwrap(),
            Reviewer
        );
        assert_eq!(map_role(ReviewService, Admin).unwrap_err().class(), "UnknownRole");
        assert_eq!(map_role(DocumentService, Editor).unwrap_err().class(), "UnknownRole");
    }

    #[test]
    fn map_role_is_an_involution() {
        for side in SIDES {
            for role in [RoleKind::Author, RoleKind::Reviewer, RoleKind::Editor, RoleKind::Admin] {
                if let Ok(mapped) = map_role(side, role) {
                    assert_eq!(map_role(side.other(), mapped).unwrap(), role);
                }
            }
        }
    }

    #[test]
    fn regrant_is_idempotent_and_conflicts_are_refused() {
        let (u1, d1, d2) = (UserId::from("u1"), DocumentId::from("d1"), DocumentId::from("d2"));
        let mut g = Grants::default();
        assert_eq!(g.grant_role(&u1, &d1, RoleKind::Reviewer, Timestamp(1)).unwrap(), GrantOutcome::Created);
        assert_eq!(g.grant_role(&u1, &d1, RoleKind::Reviewer, Timestamp(2)).unwrap(), GrantOutcome::Unchanged);
        assert_eq!(g.len(), 1);
        let err = g.grant_role(&u1, &d1, RoleKind::Author, Timestamp(3)).unwrap_err();
        assert_eq!(err.class(), "RoleConflict");
        g.grant_role(&u1, &d2, RoleKind::Author, Timestamp(4)).unwrap();
        assert_eq!(g.role_of(&u1, &d2), Some(RoleKind::Author));
        assert_eq!(g.role_of(&u1, &d1), Some(RoleKind::Reviewer));
    }

    fn comment(author: &str, role: RoleKind, vis: VisibilityState, audience: Option<Audience>) -> Comment {
        Comment {
            comment_id: CommentId::from("cmt-1"),
            document_id: DocumentId::from("d1"),
            anchor: Anchor {
                block_id: BlockId::from("b1"),
                start: 0,
                end: 1,
            },
            author_id: UserId::from(author),
            author_role_at_creation: role,
            body: "x".into(),
            visibility: vis,
            audience,
            created_at: Timestamp(0),
            orphaned: false,
        }
    }

    /// Hand-derived truth table. Viewer classes: E (editor), A (author a1),
    /// R1, R2. Comment author classes: A (co-author a2), R1, R2, E (editor,
    /// addressed to all participants). Rules applied by hand:
    ///   authors see author and reviewer comments, reviewer ones only once
    ///   approved; a reviewer does not see other reviewers' comments;
    ///   editors and own-comment viewers see everything; reviewers do not see
    ///   author drafting comments.
    #[test]
    fn visibility_truth_table() {
        use VisibilityState::*;
        // (viewer, comment author, state, expected)
        #[rustfmt::skip]
        let table: [(&str, &str, VisibilityState, bool); 32] = [
            ("E", "A", Pending, true),  ("E", "A", Approved, true),
            ("E", "R1", Pending, true), ("E", "R1", Approved, true),
            ("E", "R2", Pending, true), ("E", "R2", Approved, true),
            ("E", "E", Pending, true),  ("E", "E", Approved, true),
            ("A", "A", Pending, true),  ("A", "A", Approved, true),
            ("A", "R1", Pending, false), ("A", "R1", Approved, true),
            ("A", "R2", Pending, false), ("A", "R2", Approved, true),
            ("A", "E", Pending, true),  ("A", "E", Approved, true),
            ("R1", "A", Pending, false), ("R1", "A", Approved, false),
            ("R1", "R1", Pending, true), ("R1", "R1", Approved, true),
            ("R1", "R2", Pending, false), ("R1", "R2", Approved, false),
            ("R1", "E", Pending, true), ("R1", "E", Approved, true),
            ("R2", "A", Pending, false), ("R2", "A", Approved, false),
            ("R2", "R1", Pending, false), ("R2", "R1", Approved, false),
            ("R2", "R2", Pending, true), ("R2", "R2", Approved, true),
            ("R2", "E", Pending, true), ("R2", "E", Approved, true),
        ];
        let who = |class: &str| -> (&'static str, RoleKind) {
            match class {
                "E" => ("ed", RoleKind::Admin),
                "A" => ("a1", RoleKind::Author),
                "R1" => ("r1", RoleKind::Reviewer),
                "R2" => ("r2", RoleKind::Reviewer),
                _ => unreachable!(),
            }
        };
        for (viewer, author, state, expected) in table {
            let (viewer_id, viewer_role) = who(viewer);
            let (author_id, author_role, audience) = match author {
                "A" => ("a2", RoleKind::Author, None),
                "E" => ("ed2", RoleKind::Admin, Some(Audience::AllParticipants)),
                other => {
                    let (id, role) = who(other);
                    (id, role, None)
                }
            };
            let c = comment(author_id, author_role, state, audience);
            assert_eq!(
                comment_visible(viewer_role, &UserId::from(viewer_id), &c),
                expected,
                "viewer {viewer} comment by {author} {state:?}"
            );
        }
    }

    #[test]
    fn editor_comment_audiences() {
        let r1 = UserId::from("r1");
        let r2 = UserId::from("r2");
        let a = UserId::from("a1");
        let to_r1 = comment("ed", RoleKind::Admin, VisibilityState::Approved, Some(Audience::Reviewer(r1.clone())));
        assert!(comment_visible(RoleKind::Reviewer, &r1, &to_r1));
        assert!(!comment_visible(RoleKind::Reviewer, &r2, &to_r1));
        assert!(!comment_visible(RoleKind::Author, &a, &to_r1));
        let authors_only = comment("ed", RoleKind::Admin, VisibilityState::Approved, Some(Audience::AuthorsOnly));
        assert!(comment_visible(RoleKind::Author, &a, &authors_only));
        assert!(!comment_visible(RoleKind::Reviewer, &r1, &authors_only));
    }

    #[test]
    fn approval_gating() {
        let author = UserId::from("a1");
        let mut c = comment("r1", RoleKind::Reviewer, VisibilityState::Pending, None);
        assert!(!comment_visible(RoleKind::Author, &author, &c));
        assert_eq!(approve_comment(RoleKind::Reviewer, &mut c).unwrap_err(), Error::NotEditor);
        assert_eq!(approve_comment(RoleKind::Author, &mut c).unwrap_err(), Error::NotEditor);
        assert_eq!(approve_comment(RoleKind::Admin, &mut c).unwrap(), ApproveOutcome::Approved);
        assert!(comment_visible(RoleKind::Author, &author, &c));
        assert_eq!(approve_comment(RoleKind::Editor, &mut c).unwrap(), ApproveOutcome::AlreadyApproved);
        assert_eq!(c.visibility, VisibilityState::Approved);
    }

    #[test]
    fn identity_masking() {
        let kim = Subject { role: RoleKind::Reviewer, name: "Kim", reviewer_number: Some(1) };
        let ada = Subject { role: RoleKind::Author, name: "Ada", reviewer_number: None };
        assert_eq!(display_identity(RoleKind::Author, kim, BlindMode::SingleBlind), "Reviewer 1");
        assert_eq!(display_identity(RoleKind::Author, kim, BlindMode::DoubleBlind), "Reviewer 1");
        assert_eq!(display_identity(RoleKind::Editor, kim, BlindMode::DoubleBlind), "Kim");
        assert_eq!(display_identity(RoleKind::Admin, ada, BlindMode::DoubleBlind), "Ada");
        assert_eq!(display_identity(RoleKind::Reviewer, ada, BlindMode::DoubleBlind), "Author");
        assert_eq!(display_identity(RoleKind::Reviewer, ada, BlindMode::SingleBlind), "Ada");
        let second = Subject { reviewer_number: Some(2), ..kim };
        assert_eq!(display_identity(RoleKind::Author, second, BlindMode::SingleBlind), "Reviewer 2");
    }

    fn any_role() -> impl Strategy<Value = RoleKind> {
        prop_oneof![
            Just(RoleKind::Author),
            Just(RoleKind::Reviewer),
            Just(RoleKind::Editor),
            Just(RoleKind::Admin)
        ]
    }

    fn any_audience() -> impl Strategy<Value = Option<Audience>> {
        prop_oneof![
            Just(None),
            Just(Some(Audience::AllParticipants)),
            Just(Some(Audience::AuthorsOnly)),
            (0u8..3).prop_map(|i| Some(Audience::Reviewer(UserId(format!("u{i}"))))),
        ]
    }

    proptest! {
        #[test]
        fn open_mode_never_masks(viewer in any_role(), subject in any_role(), name in "[A-Za-z ]{1,12}") {
            let s = Subject { role: subject, name: &name, reviewer_number: Some(3) };
            prop_assert_eq!(display_identity(viewer, s, BlindMode::Open), name.clone());
        }

        #[test]
        fn editors_and_owners_always_see(
            author in 0u8..3, viewer in 0u8..3, role in any_role(),
            pending in any::<bool>(), audience in any_audience(), viewer_role in any_role(),
        ) {
            let vis = if pending { VisibilityState::Pending } else { VisibilityState::Approved };
            let c = comment(&format!("u{author}"), role, vis, audience);
            let stranger = UserId(format!("u{viewer}"));
            let owner = UserId(format!("u{author}"));
            prop_assert!(comment_visible(RoleKind::Editor, &stranger, &c));
            prop_assert!(comment_visible(RoleKind::Admin, &stranger, &c));
            prop_assert!(comment_visible(viewer_role, &owner, &c));
        }

        #[test]
        fn approval_is_monotone(
            author in 0u8..3, viewer in 0u8..3, role in any_role(),
            audience in any_audience(), viewer_role in any_role(),
        ) {
            let mut c = comment(&format!("u{author}"), role, VisibilityState::Pending, audience);
            let v = UserId(format!("u{viewer}"));
            let before = comment_visible(viewer_role, &v, &c);
            approve_comment(RoleKind::Admin, &mut c).unwrap();
            let after = comment_visible(viewer_role, &v, &c);
            prop_assert!(!before || after);
        }

        #[test]
        fn at_most_one_role_per_pair(ops in proptest::collection::vec((0u8..4, 0u8..3, any_role()), 0..60)) {
            let mut g = Grants::default();
            for (i, (u, d, role)) in ops.into_iter().enumerate() {
                let _ = g.grant_role(&UserId(format!("u{u}")), &DocumentId(format!("d{d}")), role, Timestamp(i as u64));
            }
            let mut seen = std::collections::HashSet::new();
            for grant in g.iter() {
                prop_assert!(seen.insert((grant.user_id.clone(), grant.document_id.clone())));
                prop_assert!(grant.role != RoleKind::Editor);
            }
        }
    }
}
