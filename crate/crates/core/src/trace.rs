//! Interleaved execution records and their versioned JSON form.
//!
//! A trace is an ordered list of entries: events emitted by instances (or
//! at setup) and message deliveries. Every delivery on an
//! attacker-controlled channel feeds the attacker's knowledge; every
//! attacker-origin delivery must carry a term derivable at that point,
//! which the independent validator re-checks.

use crate::deduce::KnowledgeSet;
use crate::event::{Event, EventKind};
use crate::query::Violation;
use crate::term::Term;
use serde::{Deserialize, Serialize};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Reserved actor name for the attacker in entry attribution.
pub const ATTACKER: &str = "attacker";
/// Reserved actor name for scenario setup (initial compromise events).
pub const SETUP: &str = "setup";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Entry {
    /// An event emitted by `by` (an instance name, [`SETUP`], or
    /// [`ATTACKER`] for synthesized knowledge events).
    Event { by: String, event: Event },
    /// A message transmission on `chan`. `origin` is the sending instance
    /// or [`ATTACKER`]; `to` is the receiving instance or [`ATTACKER`]
    /// (for sends absorbed from an attacker-controlled channel).
    Delivery {
        chan: String,
        term: Term,
        origin: String,
        to: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub schema_version: u32,
    pub model: String,
    pub scenario_name: String,
    pub scenario_fingerprint: String,
    /// True when exploration hit a bound while producing this trace set;
    /// verdicts drawn from it are only claims within bounds.
    pub bounded: bool,
    pub entries: Vec<Entry>,
    /// The attacker's knowledge basis at the end of the execution.
    pub final_knowledge: Vec<Term>,
    /// Set when the trace is emitted as a counterexample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
}

impl Trace {
    /// The event sequence of the trace, in order. Query matching runs over
    /// this list; violation indices refer to positions in it.
    pub fn events(&self) -> Vec<&Event> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Entry::Event { event, .. } => Some(event),
                _ => None,
            })
            .collect()
    }

    pub fn events_cloned(&self) -> Vec<Event> {
        self.events().into_iter().cloned().collect()
    }

    /// Completion session keys appearing in the trace, deduplicated.
    pub fn session_keys(&self) -> Vec<Term> {
        let mut keys: Vec<Term> = self
            .events()
            .iter()
            .filter_map(|e| e.session_key().cloned())
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn final_knowledge_set(&self) -> KnowledgeSet {
        KnowledgeSet::from_terms(self.final_knowledge.iter().cloned())
    }

    /// Stable ordering key for tie-breaking among equal-length traces.
    pub fn canonical_key(&self) -> String {
        serde_json::to_string(&self.entries).unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn from_json(s: &str) -> crate::error::Result<Trace> {
        Ok(serde_json::from_str(s)?)
    }

    /// A short human-readable rendering, one line per entry.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            match e {
                Entry::Event { by, event } => {
                    out.push_str(&format!("{i:3}  [{by}] {event}\n"));
                }
                Entry::Delivery {
                    chan,
                    term,
                    origin,
                    to,
                } => {
                    out.push_str(&format!("{i:3}  {origin} -> {to} on @{chan}: {term}\n"));
                }
            }
        }
        out
    }

    /// Events of the given kind with their event-sequence index.
    pub fn events_of(&self, kind: EventKind) -> Vec<(usize, &Event)> {
        self.events()
            .into_iter()
            .enumerate()
            .filter(|(_, e)| e.kind == kind)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Value;

    fn sample() -> Trace {
        Trace {
            schema_version: TRACE_SCHEMA_VERSION,
            model: "ssp-nc".into(),
            scenario_name: "honest".into(),
            scenario_fingerprint: "abc".into(),
            bounded: false,
            entries: vec![
                Entry::Event {
                    by: SETUP.into(),
                    event: Event::new(
                        EventKind::CompromiseDevice,
                        vec![Value::Chan("B".into())],
                    ),
                },
                Entry::Delivery {
                    chan: "net".into(),
                    term: Term::share(Term::nonce("x@A")),
                    origin: "A".into(),
                    to: ATTACKER.into(),
                },
            ],
            final_knowledge: vec![Term::share(Term::nonce("x@A"))],
            violation: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let back = Trace::from_json(&t.to_json()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn events_filters_deliveries() {
        let t = sample();
        assert_eq!(t.events().len(), 1);
        assert_eq!(t.events()[0].kind, EventKind::CompromiseDevice);
    }
}
