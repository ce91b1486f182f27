//! Correspondence-assertion queries and the matcher that decides whether a
//! finished trace satisfies them.
//!
//! A query reads: for every way of matching the conclusion (a conjunction
//! of event patterns) against trace events, some premise disjunct must be
//! satisfied by events at strictly earlier indices under the same variable
//! binding. The injective variant additionally requires that each premise
//! event justifies at most one conclusion instance.

use crate::error::{Error, Result};
use crate::event::{Event, EventKind, Value};
use crate::term::Term;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One argument of an event pattern: a variable, a wildcard, or a ground
/// value. Function patterns are deliberately unsupported; the shipped
/// queries need nothing more.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgPat {
    #[serde(rename = "var")]
    Var(String),
    #[serde(rename = "wild")]
    Wild,
    #[serde(rename = "ground")]
    Ground(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPat {
    pub kind: EventKind,
    pub args: Vec<ArgPat>,
}

impl EventPat {
    pub fn new(kind: EventKind, args: Vec<ArgPat>) -> EventPat {
        EventPat { kind, args }
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|a| match a {
            ArgPat::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Attempts to extend `binding` so that the pattern matches `event`.
    fn match_event(&self, event: &Event, binding: &Binding) -> Option<Binding> {
        if self.kind != event.kind || self.args.len() != event.args.len() {
            return None;
        }
        let mut b = binding.clone();
        for (pat, val) in self.args.iter().zip(event.args.iter()) {
            match pat {
                ArgPat::Wild => {}
                ArgPat::Ground(g) => {
                    if g != val {
                        return None;
                    }
                }
                ArgPat::Var(name) => match b.get(name) {
                    Some(bound) if bound != val => return None,
                    Some(_) => {}
                    None => {
                        b.insert(name.clone(), val.clone());
                    }
                },
            }
        }
        Some(b)
    }
}

impl fmt::Display for EventPat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.name())?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match a {
                ArgPat::Var(v) => write!(f, "{v}")?,
                ArgPat::Wild => write!(f, "_")?,
                ArgPat::Ground(Value::Term(Term::Const(c))) => write!(f, "'{c}")?,
                ArgPat::Ground(g) => write!(f, "{g}")?,
            }
        }
        write!(f, ")")
    }
}

pub type Binding = BTreeMap<String, Value>;

/// A named correspondence query: conclusion conjunction, premise
/// disjunction of conjunctions, and an injectivity flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub name: String,
    pub conclusion: Vec<EventPat>,
    pub premises: Vec<Vec<EventPat>>,
    pub injective: bool,
}

impl Query {
    pub fn new(
        name: impl Into<String>,
        conclusion: Vec<EventPat>,
        premises: Vec<Vec<EventPat>>,
    ) -> Query {
        Query {
            name: name.into(),
            conclusion,
            premises,
            injective: false,
        }
    }

    pub fn injective(mut self) -> Query {
        self.injective = true;
        self
    }

    /// Rejects queries whose premises use variables the conclusion never
    /// binds, and arity mismatches. Run before matching.
    pub fn validate(&self) -> Result<()> {
        let mut bound: BTreeSet<&str> = BTreeSet::new();
        for pat in &self.conclusion {
            if pat.args.len() != pat.kind.arity() {
                return Err(Error::MalformedQuery {
                    query: self.name.clone(),
                    reason: format!("{} expects {} arguments", pat.kind.name(), pat.kind.arity()),
                });
            }
            bound.extend(pat.vars());
        }
        for disjunct in &self.premises {
            for pat in disjunct {
                if pat.args.len() != pat.kind.arity() {
                    return Err(Error::MalformedQuery {
                        query: self.name.clone(),
                        reason: format!(
                            "{} expects {} arguments",
                            pat.kind.name(),
                            pat.kind.arity()
                        ),
                    });
                }
                for v in pat.vars() {
                    if !bound.contains(v) {
                        return Err(Error::MalformedQuery {
                            query: self.name.clone(),
                            reason: format!("premise variable {v} not bound by the conclusion"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A query violation: the conclusion binding that no premise disjunct
/// could justify, plus the indices of the matched conclusion events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub query: String,
    pub conclusion_binding: Binding,
    pub conclusion_indices: Vec<usize>,
    pub unmet_premises: Vec<Vec<EventPat>>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query {} violated with ", self.query)?;
        let parts: Vec<String> = self
            .conclusion_binding
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryOutcome {
    Holds,
    Violated(Violation),
}

impl QueryOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, QueryOutcome::Holds)
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            QueryOutcome::Holds => None,
            QueryOutcome::Violated(v) => Some(v),
        }
    }
}

/// One fully matched conclusion: event indices (in pattern order) plus the
/// resulting binding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ConclusionInstance {
    indices: Vec<usize>,
    binding: Binding,
}

/// Decides whether `events` satisfies `q`. Returns the lexicographically
/// first violation (ordered by conclusion event indices) if not.
///
/// The trace must be complete; the matcher is a pure function of the event
/// list and is insensitive to the listing order of premise disjuncts.
pub fn check_query(events: &[Event], q: &Query) -> Result<QueryOutcome> {
    q.validate()?;
    let mut instances = Vec::new();
    enumerate_conclusions(
        events,
        &q.conclusion,
        0,
        &Binding::new(),
        &mut Vec::new(),
        &mut instances,
    );
    instances.sort();
    instances.dedup();

    if !q.injective {
        for inst in &instances {
            let horizon = inst.indices.iter().copied().max().unwrap_or(0);
            let satisfied = q
                .premises
                .iter()
                .any(|disjunct| premise_holds(events, disjunct, &inst.binding, horizon, None));
            if !satisfied {
                return Ok(QueryOutcome::Violated(Violation {
                    query: q.name.clone(),
                    conclusion_binding: inst.binding.clone(),
                    conclusion_indices: inst.indices.clone(),
                    unmet_premises: q.premises.clone(),
                }));
            }
        }
        return Ok(QueryOutcome::Holds);
    }

    // Injective: premise events may each justify at most one conclusion
    // instance. Search for an assignment of disjoint premise-event sets to
    // instances, backtracking over the alternatives for each instance.
    let mut used: BTreeSet<usize> = BTreeSet::new();
    match assign_injective(events, q, &instances, 0, &mut used) {
        None => Ok(QueryOutcome::Holds),
        Some(bad) => {
            let inst = &instances[bad];
            Ok(QueryOutcome::Violated(Violation {
                query: q.name.clone(),
                conclusion_binding: inst.binding.clone(),
                conclusion_indices: inst.indices.clone(),
                unmet_premises: q.premises.clone(),
            }))
        }
    }
}

fn enumerate_conclusions(
    events: &[Event],
    patterns: &[EventPat],
    at: usize,
    binding: &Binding,
    indices: &mut Vec<usize>,
    out: &mut Vec<ConclusionInstance>,
) {
    if at == patterns.len() {
        out.push(ConclusionInstance {
            indices: indices.clone(),
            binding: binding.clone(),
        });
        return;
    }
    for (i, e) in events.iter().enumerate() {
        if let Some(b) = patterns[at].match_event(e, binding) {
            indices.push(i);
            enumerate_conclusions(events, patterns, at + 1, &b, indices, out);
            indices.pop();
        }
    }
}

/// True if every pattern of `disjunct` matches some event strictly before
/// `horizon` under `binding`. When `reserve` is given, the chosen events
/// must avoid the already-consumed set and are recorded into it.
fn premise_holds(
    events: &[Event],
    disjunct: &[EventPat],
    binding: &Binding,
    horizon: usize,
    reserve: Option<&mut BTreeSet<usize>>,
) -> bool {
    fn solve(
        events: &[Event],
        disjunct: &[EventPat],
        at: usize,
        binding: &Binding,
        horizon: usize,
        used: &BTreeSet<usize>,
        picked: &mut Vec<usize>,
    ) -> bool {
        if at == disjunct.len() {
            return true;
        }
        for i in 0..horizon {
            if used.contains(&i) || picked.contains(&i) {
                continue;
            }
            if let Some(b) = disjunct[at].match_event(&events[i], binding) {
                picked.push(i);
                if solve(events, disjunct, at + 1, &b, horizon, used, picked) {
                    return true;
                }
                picked.pop();
            }
        }
        false
    }

    match reserve {
        None => {
            let empty = BTreeSet::new();
            let mut picked = Vec::new();
            solve(events, disjunct, 0, binding, horizon, &empty, &mut picked)
        }
        Some(used) => {
            let mut picked = Vec::new();
            let snapshot = used.clone();
            if solve(events, disjunct, 0, binding, horizon, &snapshot, &mut picked) {
                used.extend(picked);
                true
            } else {
                false
            }
        }
    }
}

/// Tries to justify instances `from..` with disjoint premise events.
/// Returns the index of the first instance that cannot be justified.
fn assign_injective(
    events: &[Event],
    q: &Query,
    instances: &[ConclusionInstance],
    from: usize,
    used: &mut BTreeSet<usize>,
) -> Option<usize> {
    if from == instances.len() {
        return None;
    }
    let inst = &instances[from];
    let horizon = inst.indices.iter().copied().max().unwrap_or(0);
    for disjunct in &q.premises {
        let mut trial = used.clone();
        if premise_holds(events, disjunct, &inst.binding, horizon, Some(&mut trial)) {
            let mut next = trial.clone();
            match assign_injective(events, q, instances, from + 1, &mut next) {
                None => {
                    *used = next;
                    return None;
                }
                Some(_) => continue,
            }
        }
    }
    Some(from)
}

// ---------------------------------------------------------------------------
// Builtin queries

fn var(v: &str) -> ArgPat {
    ArgPat::Var(v.into())
}

fn pat(kind: EventKind, args: Vec<ArgPat>) -> EventPat {
    EventPat::new(kind, args)
}

/// The two device-pairing misbinding queries. They differ only in which
/// side the accessed device is on: one version requires the user to have
/// access to the initiator, the other to the non-initiator.
pub fn ssp_misbinding(version: char) -> Query {
    let access_to = match version {
        'A' => "A",
        _ => "B",
    };
    Query::new(
        format!("ssp-misbinding-{version}"),
        vec![
            pat(EventKind::HasAccess, vec![var("U"), var(access_to)]),
            pat(EventKind::InitiatorComplete, vec![var("A"), var("K")]),
            pat(EventKind::NoninitiatorComplete, vec![var("B"), var("K")]),
        ],
        vec![
            vec![pat(
                EventKind::IntendToPair,
                vec![var("U"), var("A"), var("B")],
            )],
            vec![pat(EventKind::CompromiseUser, vec![var("U")])],
            vec![
                pat(EventKind::CompromiseDevice, vec![var("A")]),
                pat(EventKind::CompromiseDevice, vec![var("B")]),
            ],
        ],
    )
}

/// Misbinding for server-registered devices: if the server and a peer
/// complete with the same key and a user has HTTPS access to the server,
/// the user must have intended that peer (or someone was compromised).
pub fn noob_misbinding() -> Query {
    Query::new(
        "noob-misbinding",
        vec![
            pat(EventKind::HttpsAccess, vec![var("U"), var("S")]),
            pat(EventKind::ServerComplete, vec![var("S"), var("K")]),
            pat(EventKind::PeerComplete, vec![var("P"), var("K")]),
        ],
        vec![
            vec![pat(EventKind::CompromiseUser, vec![var("U")])],
            vec![pat(
                EventKind::IntendToPair,
                vec![var("U"), var("S"), var("P")],
            )],
            vec![
                pat(EventKind::CompromisePeer, vec![var("P")]),
                pat(EventKind::CompromiseServer, vec![var("S")]),
            ],
        ],
    )
}

/// Secrecy sanity for pairing models: the attacker derives a key shared by
/// two completed endpoints only if one of their channels was compromised.
pub fn ssp_secrecy_sanity() -> Query {
    Query::new(
        "secrecy-sanity",
        vec![
            pat(EventKind::AttackerObtained, vec![var("K")]),
            pat(EventKind::InitiatorComplete, vec![var("A"), var("K")]),
            pat(EventKind::NoninitiatorComplete, vec![var("B"), var("K")]),
        ],
        vec![
            vec![pat(EventKind::CompromiseDevice, vec![var("A")])],
            vec![pat(EventKind::CompromiseDevice, vec![var("B")])],
        ],
    )
}

/// Secrecy sanity for the registration model.
pub fn noob_secrecy_sanity() -> Query {
    Query::new(
        "secrecy-sanity",
        vec![
            pat(EventKind::AttackerObtained, vec![var("K")]),
            pat(EventKind::ServerComplete, vec![var("S"), var("K")]),
            pat(EventKind::PeerComplete, vec![var("P"), var("K")]),
        ],
        vec![
            vec![pat(EventKind::CompromisePeer, vec![var("P")])],
            vec![pat(EventKind::CompromiseServer, vec![var("S")])],
        ],
    )
}

/// Key agreement for the signed-DH demonstration: if a responder commits
/// to (peer Z, key K) and some initiator ran as (X, peer Y=responder, K),
/// then Z must have run as an initiator toward Y with K. The classic
/// identity-substitution attack leaves the premise unmet.
pub fn dh_agreement() -> Query {
    Query::new(
        "dh-agreement",
        vec![
            pat(
                EventKind::Running,
                vec![ArgPat::Wild, var("X"), var("Y"), var("K")],
            ),
            pat(
                EventKind::Commit,
                vec![ArgPat::Wild, var("Y"), var("Z"), var("K")],
            ),
        ],
        vec![vec![pat(
            EventKind::Running,
            vec![ArgPat::Wild, var("Z"), var("Y"), var("K")],
        )]],
    )
}

/// Secrecy sanity for the signed-DH demonstration.
pub fn dh_secrecy_sanity() -> Query {
    Query::new(
        "secrecy-sanity",
        vec![
            pat(EventKind::AttackerObtained, vec![var("K")]),
            pat(
                EventKind::Running,
                vec![var("C1"), ArgPat::Wild, ArgPat::Wild, var("K")],
            ),
            pat(
                EventKind::Commit,
                vec![var("C2"), ArgPat::Wild, ArgPat::Wild, var("K")],
            ),
        ],
        vec![
            vec![pat(EventKind::CompromiseDevice, vec![var("C1")])],
            vec![pat(EventKind::CompromiseDevice, vec![var("C2")])],
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, args: Vec<Value>) -> Event {
        Event::new(kind, args)
    }

    fn user(u: &str) -> Value {
        Value::User(u.into())
    }

    fn chan(c: &str) -> Value {
        Value::Chan(c.into())
    }

    fn key(k: &str) -> Value {
        Value::Term(Term::nonce(k))
    }

    #[test]
    fn honest_trace_holds() {
        let trace = vec![
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::HasAccess, vec![user("u"), chan("B")]),
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("B"), key("k")]),
        ];
        let out = check_query(&trace, &ssp_misbinding('A')).unwrap();
        assert!(out.holds());
    }

    #[test]
    fn misbinding_trace_is_violation() {
        // user intended (A, B); A completed with C instead
        let trace = vec![
            ev(EventKind::CompromiseDevice, vec![chan("B")]),
            ev(EventKind::CompromiseUser, vec![user("u2")]),
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::HasAccess, vec![user("u"), chan("B")]),
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("C"), key("k")]),
        ];
        let out = check_query(&trace, &ssp_misbinding('A')).unwrap();
        let v = out.violation().expect("expected a violation");
        assert_eq!(v.conclusion_binding.get("B"), Some(&chan("C")));
        assert_eq!(v.conclusion_binding.get("A"), Some(&chan("A")));
    }

    #[test]
    fn empty_trace_holds_vacuously() {
        let out = check_query(&[], &ssp_misbinding('A')).unwrap();
        assert!(out.holds());
    }

    #[test]
    fn premise_must_be_strictly_earlier() {
        // intent logged after completion does not count
        let trace = vec![
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("B"), key("k")]),
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
        ];
        let out = check_query(&trace, &ssp_misbinding('A')).unwrap();
        assert!(!out.holds());
    }

    #[test]
    fn unbound_premise_variable_is_rejected() {
        let q = Query::new(
            "bad",
            vec![EventPat::new(
                EventKind::CompromiseUser,
                vec![ArgPat::Var("U".into())],
            )],
            vec![vec![EventPat::new(
                EventKind::HasAccess,
                vec![ArgPat::Var("U".into()), ArgPat::Var("X".into())],
            )]],
        );
        assert!(check_query(&[], &q).is_err());
    }

    #[test]
    fn duplicate_premise_events_do_not_change_noninjective_verdict() {
        let mut trace = vec![
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("B"), key("k")]),
        ];
        let before = check_query(&trace, &ssp_misbinding('A')).unwrap();
        trace.insert(
            2,
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
        );
        let after = check_query(&trace, &ssp_misbinding('A')).unwrap();
        assert_eq!(before.holds(), after.holds());
    }

    /// Two completed sessions justified by a single intent: fine without
    /// injectivity, a violation with it.
    #[test]
    fn injective_requires_one_intent_per_session() {
        let trace = vec![
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::IntendToPair, vec![user("u"), chan("A"), chan("B")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k1")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("B"), key("k1")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k2")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("B"), key("k2")]),
        ];
        let plain = check_query(&trace, &ssp_misbinding('A')).unwrap();
        assert!(plain.holds());
        let inj = check_query(&trace, &ssp_misbinding('A').injective()).unwrap();
        assert!(!inj.holds());
    }

    #[test]
    fn violation_selection_is_first_by_conclusion_indices() {
        let trace = vec![
            ev(EventKind::HasAccess, vec![user("u"), chan("A")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k1")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("C"), key("k1")]),
            ev(EventKind::InitiatorComplete, vec![chan("A"), key("k2")]),
            ev(EventKind::NoninitiatorComplete, vec![chan("D"), key("k2")]),
        ];
        let out = check_query(&trace, &ssp_misbinding('A')).unwrap();
        let v = out.violation().unwrap();
        assert_eq!(v.conclusion_indices, vec![0, 1, 2]);
        assert_eq!(v.conclusion_binding.get("B"), Some(&chan("C")));
    }

    #[test]
    fn dh_agreement_catches_identity_substitution() {
        let gxy = Value::Term(Term::dh(Term::nonce("x"), Term::nonce("y")));
        let ida = Value::Term(Term::cons("idA"));
        let idb = Value::Term(Term::cons("idB"));
        let idc = Value::Term(Term::cons("idC"));
        // A ran toward C with key gxy; C committed to B with the same key
        let attack = vec![
            ev(
                EventKind::Running,
                vec![chan("A"), ida.clone(), idc.clone(), gxy.clone()],
            ),
            ev(
                EventKind::Commit,
                vec![chan("C"), idc.clone(), idb.clone(), gxy.clone()],
            ),
        ];
        assert!(!check_query(&attack, &dh_agreement()).unwrap().holds());

        // honest: C committed to A, whose Running event precedes it
        let honest = vec![
            ev(
                EventKind::Running,
                vec![chan("A"), ida.clone(), idc.clone(), gxy.clone()],
            ),
            ev(EventKind::Commit, vec![chan("C"), idc, ida, gxy]),
        ];
        assert!(check_query(&honest, &dh_agreement()).unwrap().holds());
    }

    #[test]
    fn builtin_queries_validate() {
        for q in [
            ssp_misbinding('A'),
            ssp_misbinding('B'),
            noob_misbinding(),
            ssp_secrecy_sanity(),
            noob_secrecy_sanity(),
            dh_agreement(),
            dh_secrecy_sanity(),
        ] {
            q.validate().unwrap();
        }
    }
}
