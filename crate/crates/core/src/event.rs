//! Trace events: the protocol facts that correspondence queries range over.
//!
//! Users and devices are identified in events by opaque user identifiers
//! and channel handles. Neither can appear inside a message term sent on
//! any channel — that uncommunicability is what makes pairing identities
//! "physical" — so events are the only place the identifiers surface.

use crate::term::Term;
use serde::{Deserialize, Serialize};
use std::fmt;

/// An argument slot of an event: a user identifier, a channel handle, or a
/// message term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    #[serde(rename = "user")]
    User(String),
    #[serde(rename = "chan")]
    Chan(String),
    #[serde(rename = "term")]
    Term(Term),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::User(u) => write!(f, "{u}"),
            Value::Chan(c) => write!(f, "@{c}"),
            Value::Term(t) => write!(f, "{t}"),
        }
    }
}

/// Event kinds, with fixed argument shapes (see [`EventKind::arity`]).
///
/// `Running` and `Commit` are agreement events for the signed-DH
/// demonstration model, where identities are communicable terms rather
/// than channel handles. `AttackerObtained` is synthesized at trace
/// finalization for every completed session key the attacker can derive;
/// it backs the secrecy sanity query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    HasAccess,
    IntendToPair,
    CodeDisplayed,
    CodeConfirmed,
    InitiatorComplete,
    NoninitiatorComplete,
    CompromiseUser,
    CompromiseDevice,
    HttpsAccess,
    ServerComplete,
    PeerComplete,
    CompromisePeer,
    CompromiseServer,
    Running,
    Commit,
    AttackerObtained,
}

impl EventKind {
    pub const ALL: [EventKind; 16] = [
        EventKind::HasAccess,
        EventKind::IntendToPair,
        EventKind::CodeDisplayed,
        EventKind::CodeConfirmed,
        EventKind::InitiatorComplete,
        EventKind::NoninitiatorComplete,
        EventKind::CompromiseUser,
        EventKind::CompromiseDevice,
        EventKind::HttpsAccess,
        EventKind::ServerComplete,
        EventKind::PeerComplete,
        EventKind::CompromisePeer,
        EventKind::CompromiseServer,
        EventKind::Running,
        EventKind::Commit,
        EventKind::AttackerObtained,
    ];

    pub fn arity(self) -> usize {
        match self {
            EventKind::HasAccess | EventKind::HttpsAccess => 2,
            EventKind::IntendToPair => 3,
            EventKind::CodeDisplayed | EventKind::CodeConfirmed => 2,
            EventKind::InitiatorComplete
            | EventKind::NoninitiatorComplete
            | EventKind::ServerComplete
            | EventKind::PeerComplete => 2,
            EventKind::CompromiseUser
            | EventKind::CompromiseDevice
            | EventKind::CompromisePeer
            | EventKind::CompromiseServer => 1,
            EventKind::Running | EventKind::Commit => 4,
            EventKind::AttackerObtained => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::HasAccess => "HasAccess",
            EventKind::IntendToPair => "IntendToPair",
            EventKind::CodeDisplayed => "CodeDisplayed",
            EventKind::CodeConfirmed => "CodeConfirmed",
            EventKind::InitiatorComplete => "InitiatorComplete",
            EventKind::NoninitiatorComplete => "NoninitiatorComplete",
            EventKind::CompromiseUser => "CompromiseUser",
            EventKind::CompromiseDevice => "CompromiseDevice",
            EventKind::HttpsAccess => "HttpsAccess",
            EventKind::ServerComplete => "ServerComplete",
            EventKind::PeerComplete => "PeerComplete",
            EventKind::CompromisePeer => "CompromisePeer",
            EventKind::CompromiseServer => "CompromiseServer",
            EventKind::Running => "Running",
            EventKind::Commit => "Commit",
            EventKind::AttackerObtained => "AttackerObtained",
        }
    }

    pub fn from_name(name: &str) -> Option<EventKind> {
        EventKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Completion events carry a session key as their last argument.
    pub fn is_completion(self) -> bool {
        matches!(
            self,
            EventKind::InitiatorComplete
                | EventKind::NoninitiatorComplete
                | EventKind::ServerComplete
                | EventKind::PeerComplete
                | EventKind::Commit
        )
    }

    pub fn is_compromise(self) -> bool {
        matches!(
            self,
            EventKind::CompromiseUser
                | EventKind::CompromiseDevice
                | EventKind::CompromisePeer
                | EventKind::CompromiseServer
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub args: Vec<Value>,
}

impl Event {
    pub fn new(kind: EventKind, args: Vec<Value>) -> Event {
        debug_assert_eq!(kind.arity(), args.len(), "{} arity", kind.name());
        Event { kind, args }
    }

    /// The session key argument of a completion event.
    pub fn session_key(&self) -> Option<&Term> {
        if !self.kind.is_completion() {
            return None;
        }
        match self.args.last() {
            Some(Value::Term(t)) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.name())?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_table_is_consistent() {
        for k in EventKind::ALL {
            assert_eq!(EventKind::from_name(k.name()), Some(k));
            assert!(k.arity() >= 1 && k.arity() <= 4);
        }
    }

    #[test]
    fn session_key_extraction() {
        let e = Event::new(
            EventKind::InitiatorComplete,
            vec![Value::Chan("A".into()), Value::Term(Term::nonce("k"))],
        );
        assert_eq!(e.session_key(), Some(&Term::nonce("k")));
        let e2 = Event::new(
            EventKind::HasAccess,
            vec![Value::User("u1".into()), Value::Chan("A".into())],
        );
        assert_eq!(e2.session_key(), None);
    }

    #[test]
    fn display_is_readable() {
        let e = Event::new(
            EventKind::IntendToPair,
            vec![
                Value::User("u1".into()),
                Value::Chan("A".into()),
                Value::Chan("B".into()),
            ],
        );
        assert_eq!(e.to_string(), "IntendToPair(u1, @A, @B)");
    }
}
