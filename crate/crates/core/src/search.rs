//! Bounded exploration of scenario executions under the Dolev-Yao attacker.
//!
//! The engine instantiates a scenario into a world of process instances
//! and channels, then searches over *configurations*: per-instance
//! sequences of inputs, where an input is either a term the attacker
//! injects on a controlled channel or a rendezvous with an honest send on
//! a private channel. Role programs are straight-line, so a configuration
//! determines every instance's behavior; a greedy scheduler (sound
//! because attacker knowledge only grows) realizes each configuration as
//! one canonical interleaving. Searching assignments instead of
//! interleavings collapses the orderings of independent deliveries, which
//! otherwise dominate the state space.
//!
//! Attacker-injected terms are drawn from a finite candidate set per
//! pending receive: scenario atoms, observed terms, values of honest
//! sends blocked on a rendezvous, and instantiations of the receiver's
//! own later equality checks (a receive whose value is checked against
//! `f1(...)` only ever usefully receives a matching `f1(...)` instance —
//! either a replay unifiable with the template or a forgery whose free
//! positions carry attacker nonces). Every candidate must be derivable
//! from the attacker's knowledge under the configured deduction depth,
//! which the independent trace validator re-checks.

use crate::deduce::KnowledgeSet;
use crate::error::{Error, Result};
use crate::event::{Event, EventKind, Value};
use crate::models::{Family, ProtocolModel, SERVER_NAME};
use crate::query::{check_query, Query, QueryOutcome};
use crate::role::{EvArg, Pat, RoleProgram, Sort, Step, Tpl, VarId};
use crate::scenario::{Scenario, UserDecl};
use crate::term::Term;
use crate::trace::{Entry, Trace, ATTACKER, SETUP, TRACE_SCHEMA_VERSION};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

const ATT_NONCE_PREFIX: &str = "att#";

// ---------------------------------------------------------------------------
// World construction

#[derive(Debug, Clone)]
pub struct Channel {
    pub name: String,
    pub public: bool,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub role: Arc<RoleProgram>,
    /// Slot index -> channel index.
    pub slots: Vec<usize>,
    pub user: Option<String>,
    pub self_chan: Option<usize>,
    /// Predetermined fresh names per variable (instance-qualified).
    pub fresh_terms: Vec<Option<Term>>,
    pub init_env: Vec<Option<Term>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynTarget {
    Device(String),
    User(String),
}

/// A scenario instantiated against its model: everything the explorer
/// needs, precomputed.
#[derive(Debug, Clone)]
pub struct World {
    pub model: ProtocolModel,
    pub scenario: Scenario,
    pub channels: Vec<Channel>,
    pub instances: Vec<Instance>,
    pub dynamic: Vec<DynTarget>,
    pub atom_vocab: Vec<Term>,
    pub att_nonces: Vec<Term>,
}

fn identity_term(device: &str) -> Term {
    Term::cons(format!("id{device}"))
}

impl World {
    pub fn build(model: &ProtocolModel, scenario: &Scenario) -> Result<World> {
        scenario.validate()?;
        if scenario.model != model.name {
            return Err(Error::InvalidScenario(format!(
                "scenario targets model {}, not {}",
                scenario.model, model.name
            )));
        }
        for d in &scenario.devices {
            if !model.device_roles.contains(&d.role) {
                return Err(Error::InvalidScenario(format!(
                    "device {} has role {} unknown to model {}",
                    d.name, d.role, model.name
                )));
            }
            if d.name == SERVER_NAME || d.name == ATTACKER || d.name == SETUP {
                return Err(Error::InvalidScenario(format!(
                    "device name {} is reserved",
                    d.name
                )));
            }
        }

        let mut channels = vec![Channel {
            name: "net".into(),
            public: true,
        }];
        let mut chan_of: BTreeMap<String, usize> = BTreeMap::new();
        for d in &scenario.devices {
            chan_of.insert(d.name.clone(), channels.len());
            channels.push(Channel {
                name: d.name.clone(),
                public: false,
            });
        }
        if model.family == Family::Noob {
            chan_of.insert(SERVER_NAME.into(), channels.len());
            channels.push(Channel {
                name: SERVER_NAME.into(),
                public: false,
            });
        }

        let mut instances = Vec::new();
        let mut push_instance = |name: String,
                                 role: &Arc<RoleProgram>,
                                 slots: Vec<usize>,
                                 user: Option<String>,
                                 self_chan: Option<usize>,
                                 params: Vec<(String, Term)>|
         -> Result<()> {
            let mut fresh_terms = vec![None; role.vars.len()];
            for (vid, vname) in role.vars.iter().enumerate() {
                if role.steps.iter().any(|s| matches!(s, Step::Fresh(v) if *v == vid)) {
                    fresh_terms[vid] = Some(Term::nonce(format!("{vname}@{name}")));
                }
            }
            let mut init_env = vec![None; role.vars.len()];
            for &p in &role.params {
                let pname = &role.vars[p];
                let bound = params.iter().find(|(n, _)| n == pname).map(|(_, t)| t);
                match bound {
                    Some(t) => init_env[p] = Some(t.clone()),
                    None => {
                        return Err(Error::InvalidScenario(format!(
                            "no binding for parameter {pname} of role {}",
                            role.name
                        )))
                    }
                }
            }
            instances.push(Instance {
                name,
                role: role.clone(),
                slots,
                user,
                self_chan,
                fresh_terms,
                init_env,
            });
            Ok(())
        };

        // devices run their role even when compromised; the attacker
        // additionally controls their channel
        for d in &scenario.devices {
            let role = model.role(&d.role)?;
            let own = chan_of[&d.name];
            push_instance(
                d.name.clone(),
                role,
                vec![0, own],
                None,
                Some(own),
                vec![("id".into(), identity_term(&d.name))],
            )?;
        }

        if model.family == Family::Noob {
            let role = model.role("server")?;
            let sessions = scenario
                .devices
                .len()
                .min(scenario.bounds.max_sessions as usize)
                .max(1);
            let s_chan = chan_of[SERVER_NAME];
            for k in 0..sessions {
                let name = if k == 0 {
                    SERVER_NAME.to_string()
                } else {
                    format!("{SERVER_NAME}{}", k + 1)
                };
                push_instance(name, role, vec![0, s_chan], None, Some(s_chan), vec![])?;
            }
        }

        for u in &scenario.users {
            if let UserDecl::Honest {
                name,
                initiator,
                responder,
            } = u
            {
                if model.family == Family::SignedDh {
                    return Err(Error::InvalidScenario(
                        "the signed-DH demonstration has no user ceremony".into(),
                    ));
                }
                if model.family == Family::Noob && initiator != SERVER_NAME {
                    return Err(Error::InvalidScenario(format!(
                        "user {name} must register devices against {SERVER_NAME}"
                    )));
                }
                if model.family != Family::Noob && initiator == SERVER_NAME {
                    return Err(Error::InvalidScenario(format!(
                        "model {} has no server",
                        model.name
                    )));
                }
                let role = model.role("user")?;
                let slots = vec![chan_of[initiator.as_str()], chan_of[responder.as_str()]];
                push_instance(
                    name.clone(),
                    role,
                    slots,
                    Some(name.clone()),
                    None,
                    vec![
                        ("expected-initiator-id".into(), identity_term(initiator)),
                        ("expected-responder-id".into(), identity_term(responder)),
                    ],
                )?;
            }
            if let UserDecl::Compromised { access, .. } = u {
                if access.iter().any(|a| a == SERVER_NAME) {
                    return Err(Error::InvalidScenario(
                        "the server cannot be physically accessed or compromised".into(),
                    ));
                }
            }
        }

        let dynamic: Vec<DynTarget> = scenario
            .dynamic_compromise
            .iter()
            .map(|n| {
                if scenario.devices.iter().any(|d| &d.name == n) {
                    DynTarget::Device(n.clone())
                } else {
                    DynTarget::User(n.clone())
                }
            })
            .collect();
        if dynamic.len() > 16 {
            return Err(Error::InvalidScenario(
                "at most 16 dynamic compromise targets".into(),
            ));
        }

        // atoms usable as delivery payloads: fresh names, plus identity
        // constants when the model works with identities; protocol tag
        // constants only ever appear literally in templates and patterns
        let att_nonces: Vec<Term> = (0..scenario.bounds.max_sessions)
            .map(|i| Term::nonce(format!("{ATT_NONCE_PREFIX}{i}")))
            .collect();
        let mut atom_vocab: Vec<Term> = Vec::new();
        for inst in &instances {
            for t in inst.fresh_terms.iter().flatten() {
                atom_vocab.push(t.clone());
            }
        }
        let uses_identities = model
            .roles
            .values()
            .any(|r| r.params.iter().any(|&p| r.vars[p] == "id"));
        if uses_identities {
            for d in &scenario.devices {
                atom_vocab.push(identity_term(&d.name));
            }
        }
        atom_vocab.sort();
        atom_vocab.dedup();

        Ok(World {
            model: model.clone(),
            scenario: scenario.clone(),
            channels,
            instances,
            dynamic,
            atom_vocab,
            att_nonces,
        })
    }

    fn chan_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    fn instance_index(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.name == name)
    }

    /// The compromise event, channel leaks, and leaked secrets for a device.
    fn device_compromise(&self, device: &str) -> (Event, Vec<usize>, Vec<Term>) {
        let chan = Value::Chan(device.to_string());
        let kind = match self.model.family {
            Family::Noob => EventKind::CompromisePeer,
            _ => EventKind::CompromiseDevice,
        };
        let mut extra = Vec::new();
        if self.model.family == Family::SignedDh {
            extra.push(Term::apply("sk", vec![identity_term(device)]));
        }
        (
            Event::new(kind, vec![chan]),
            self.chan_index(device).into_iter().collect(),
            extra,
        )
    }

    fn user_access(&self, user: &str) -> Vec<String> {
        match self.scenario.users.iter().find(|x| x.name() == user) {
            Some(UserDecl::Honest {
                initiator,
                responder,
                ..
            }) => vec![initiator.clone(), responder.clone()],
            Some(UserDecl::Compromised { access, .. }) => access.clone(),
            None => Vec::new(),
        }
    }

    fn user_compromise(&self, user: &str) -> (Event, Vec<usize>) {
        (
            Event::new(EventKind::CompromiseUser, vec![Value::User(user.into())]),
            self.user_access(user)
                .iter()
                .filter_map(|a| self.chan_index(a))
                .collect(),
        )
    }
}

// ---------------------------------------------------------------------------
// Configurations

/// One consumed input of an instance: a term injected by the attacker, or
/// a rendezvous with the sender's `n`-th program step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InputSrc {
    Att(Term),
    From { sender: u16, step: u16 },
}

/// A search state: who has received what so far. Role programs are
/// straight-line, so this determines every instance's behavior; the
/// realized interleaving is the greedy scheduler's canonical one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct State {
    pub inputs: Vec<Vec<InputSrc>>,
    pub dyn_fired: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Active,
    Done,
    Aborted,
}

#[derive(Debug, Clone)]
struct ProcSim {
    pc: usize,
    status: Status,
    env: Vec<Option<Term>>,
    next_input: usize,
}

/// The outcome of scheduling one configuration.
struct Sim {
    procs: Vec<ProcSim>,
    knowledge: KnowledgeSet,
    leaked: Vec<bool>,
    entries: Vec<Entry>,
    att_used: u8,
}

#[derive(Debug, Clone, Default)]
pub struct ExploreOpts {
    /// Diagnostic mode: the attacker neither absorbs nor injects; public
    /// channels behave as honest rendezvous media (still observed).
    pub passive: bool,
    /// Worker threads for frontier expansion; results are identical to the
    /// single-threaded run.
    pub jobs: usize,
    /// Stop exploring once every query in `analyze` has a violation.
    pub early_stop: bool,
}

fn controlled(world: &World, leaked: &[bool], chan: usize, passive: bool) -> bool {
    !passive && (world.channels[chan].public || leaked[chan])
}

fn att_nonces_used(term: &Term) -> u8 {
    let mut max = 0;
    term.walk(&mut |t| {
        if let Term::Nonce(n) = t {
            if let Some(ix) = n.strip_prefix(ATT_NONCE_PREFIX) {
                if let Ok(k) = ix.parse::<u8>() {
                    max = max.max(k + 1);
                }
            }
        }
    });
    max
}

/// Runs the greedy scheduler over a configuration. Dynamic compromises
/// fire first (the attacker loses nothing by corrupting early; a run
/// without the compromise is a separate configuration), then instances
/// advance in index order until no one can move. Attacker-injected inputs
/// wait until their term is derivable, which a later sweep will see.
fn simulate(world: &World, state: &State, opts: &ExploreOpts) -> Result<Sim> {
    let mut sim = Sim {
        procs: world
            .instances
            .iter()
            .map(|inst| ProcSim {
                pc: 0,
                status: Status::Active,
                env: inst.init_env.clone(),
                next_input: 0,
            })
            .collect(),
        knowledge: KnowledgeSet::new(),
        leaked: vec![false; world.channels.len()],
        entries: Vec::new(),
        att_used: 0,
    };
    for c in &world.model.constants {
        sim.knowledge.insert(Term::cons(c.clone()));
    }
    for d in &world.scenario.devices {
        sim.knowledge.insert(identity_term(&d.name));
    }
    for n in &world.att_nonces {
        sim.knowledge.insert(n.clone());
    }
    // static compromises
    for d in &world.scenario.devices {
        if d.compromised {
            let (ev, chans, extra) = world.device_compromise(&d.name);
            sim.entries.push(Entry::Event {
                by: SETUP.into(),
                event: ev,
            });
            for c in chans {
                sim.leaked[c] = true;
            }
            for t in extra {
                sim.knowledge.insert(t);
            }
        }
    }
    for u in &world.scenario.users {
        if let UserDecl::Compromised { name, .. } = u {
            let (ev, chans) = world.user_compromise(name);
            sim.entries.push(Entry::Event {
                by: SETUP.into(),
                event: ev,
            });
            for c in chans {
                sim.leaked[c] = true;
            }
        }
    }
    // dynamic compromises fired by this configuration
    for (k, target) in world.dynamic.iter().enumerate() {
        if state.dyn_fired & (1 << k) == 0 {
            continue;
        }
        match target {
            DynTarget::Device(d) => {
                let (ev, chans, extra) = world.device_compromise(d);
                sim.entries.push(Entry::Event {
                    by: ATTACKER.into(),
                    event: ev,
                });
                for c in chans {
                    sim.leaked[c] = true;
                }
                for t in extra {
                    sim.knowledge.insert(t);
                }
            }
            DynTarget::User(u) => {
                let (ev, chans) = world.user_compromise(u);
                sim.entries.push(Entry::Event {
                    by: ATTACKER.into(),
                    event: ev,
                });
                for c in chans {
                    sim.leaked[c] = true;
                }
            }
        }
    }
    for row in &state.inputs {
        for src in row {
            if let InputSrc::Att(t) = src {
                sim.att_used = sim.att_used.max(att_nonces_used(t));
            }
        }
    }

    let mut progress = true;
    while progress {
        progress = false;
        for i in 0..world.instances.len() {
            if advance(world, state, &mut sim, i, opts)? {
                progress = true;
            }
        }
    }
    for (i, p) in sim.procs.iter().enumerate() {
        if p.next_input < state.inputs[i].len() {
            return Err(Error::InvalidScenario(format!(
                "unschedulable configuration: {} input {} never fired",
                world.instances[i].name, p.next_input
            )));
        }
    }
    Ok(sim)
}

/// Advances instance `i` as far as possible; returns whether it moved.
fn advance(
    world: &World,
    state: &State,
    sim: &mut Sim,
    i: usize,
    opts: &ExploreOpts,
) -> Result<bool> {
    let mut moved = false;
    loop {
        if sim.procs[i].status != Status::Active {
            return Ok(moved);
        }
        let inst = &world.instances[i];
        let pc = sim.procs[i].pc;
        if pc >= inst.role.steps.len() {
            sim.procs[i].status = Status::Done;
            return Ok(moved);
        }
        match &inst.role.steps[pc] {
            Step::Fresh(v) => {
                sim.procs[i].env[*v] = inst.fresh_terms[*v].clone();
                sim.procs[i].pc += 1;
            }
            Step::Check { left, right } => {
                let l = left.eval(&sim.procs[i].env)?;
                let r = right.eval(&sim.procs[i].env)?;
                if l == r {
                    sim.procs[i].pc += 1;
                } else {
                    sim.procs[i].status = Status::Aborted;
                    return Ok(moved);
                }
            }
            Step::Emit { kind, args } => {
                let event = eval_event(world, i, &sim.procs[i].env, *kind, args)?;
                sim.entries.push(Entry::Event {
                    by: inst.name.clone(),
                    event,
                });
                sim.procs[i].pc += 1;
            }
            Step::Send { slot, tpl } => {
                let chan = inst.slots[*slot];
                if controlled(world, &sim.leaked, chan, opts.passive) {
                    let term = tpl.eval(&sim.procs[i].env)?;
                    sim.entries.push(Entry::Delivery {
                        chan: world.channels[chan].name.clone(),
                        term: term.clone(),
                        origin: inst.name.clone(),
                        to: ATTACKER.into(),
                    });
                    sim.knowledge.insert(term);
                    sim.procs[i].pc += 1;
                } else {
                    // private send: fires when its designated consumer is ready
                    let Some(j) = rendezvous_consumer(world, state, sim, i, pc) else {
                        return Ok(moved);
                    };
                    let term = tpl.eval(&sim.procs[i].env)?;
                    let rpc = sim.procs[j].pc;
                    let Step::Receive { pat, .. } = &world.instances[j].role.steps[rpc] else {
                        return Ok(moved);
                    };
                    let Some(binds) = pat.match_term(&term, &sim.procs[j].env) else {
                        return Err(Error::InvalidScenario(
                            "configuration rendezvous no longer matches".into(),
                        ));
                    };
                    sim.entries.push(Entry::Delivery {
                        chan: world.channels[chan].name.clone(),
                        term: term.clone(),
                        origin: inst.name.clone(),
                        to: world.instances[j].name.clone(),
                    });
                    if opts.passive && world.channels[chan].public {
                        sim.knowledge.insert(term);
                    }
                    sim.procs[i].pc += 1;
                    for (v, t) in binds {
                        sim.procs[j].env[v] = Some(t);
                    }
                    sim.procs[j].pc += 1;
                    sim.procs[j].next_input += 1;
                }
            }
            Step::Receive { slot, pat } => {
                let next = sim.procs[i].next_input;
                let Some(src) = state.inputs[i].get(next) else {
                    return Ok(moved);
                };
                match src {
                    InputSrc::From { .. } => return Ok(moved), // fired from the sender side
                    InputSrc::Att(term) => {
                        let chan = inst.slots[*slot];
                        if !controlled(world, &sim.leaked, chan, opts.passive) {
                            return Err(Error::InvalidScenario(
                                "attacker input on a private channel".into(),
                            ));
                        }
                        let depth = world.scenario.bounds.deduction_depth;
                        if !sim.knowledge.derives(&world.model.symbols, term, depth) {
                            // not derivable yet; a later sweep may supply it
                            return Ok(moved);
                        }
                        let Some(binds) = pat.match_term(term, &sim.procs[i].env) else {
                            return Err(Error::InvalidScenario(
                                "configuration input no longer matches".into(),
                            ));
                        };
                        sim.entries.push(Entry::Delivery {
                            chan: world.channels[chan].name.clone(),
                            term: term.clone(),
                            origin: ATTACKER.into(),
                            to: inst.name.clone(),
                        });
                        for (v, t) in binds {
                            sim.procs[i].env[v] = Some(t);
                        }
                        sim.procs[i].pc += 1;
                        sim.procs[i].next_input += 1;
                    }
                }
            }
        }
        moved = true;
    }
}

/// The instance whose next input consumes sender `i`'s send at `pc`, if
/// that instance is currently parked at the matching receive.
fn rendezvous_consumer(world: &World, state: &State, sim: &Sim, i: usize, pc: usize) -> Option<usize> {
    for (j, proc) in sim.procs.iter().enumerate() {
        if proc.status != Status::Active {
            continue;
        }
        let Some(InputSrc::From { sender, step }) = state.inputs[j].get(proc.next_input) else {
            continue;
        };
        if *sender as usize != i || *step as usize != pc {
            continue;
        }
        if matches!(
            world.instances[j].role.steps.get(proc.pc),
            Some(Step::Receive { .. })
        ) {
            return Some(j);
        }
    }
    None
}

fn eval_event(
    world: &World,
    i: usize,
    env: &[Option<Term>],
    kind: EventKind,
    args: &[EvArg],
) -> Result<Event> {
    let inst = &world.instances[i];
    let vals = args
        .iter()
        .map(|a| {
            Ok(match a {
                EvArg::SelfChan => {
                    let c = inst.self_chan.ok_or_else(|| {
                        Error::InvalidScenario(format!("{} has no own channel", inst.name))
                    })?;
                    Value::Chan(world.channels[c].name.clone())
                }
                EvArg::Slot(s) => Value::Chan(world.channels[inst.slots[*s]].name.clone()),
                EvArg::User => Value::User(
                    inst.user
                        .clone()
                        .ok_or_else(|| Error::InvalidScenario("role has no user".into()))?,
                ),
                EvArg::Tpl(tpl) => Value::Term(tpl.eval(env)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Event::new(kind, vals))
}

// ---------------------------------------------------------------------------
// Attacker delivery candidates

struct Gen<'a> {
    world: &'a World,
    sim: &'a Sim,
    env: &'a [Option<Term>],
    needs: &'a BTreeMap<VarId, usize>,
    role: &'a RoleProgram,
    /// The receiving instance.
    inst: &'a Instance,
}

impl<'a> Gen<'a> {
    fn depth(&self) -> u32 {
        self.world.scenario.bounds.deduction_depth
    }

    fn derivable(&self, t: &Term) -> bool {
        self.sim
            .knowledge
            .derives(&self.world.model.symbols, t, self.depth())
    }

    /// Attacker nonces in play plus one unused representative: fresh
    /// attacker nonces are interchangeable, so offering a single new one
    /// realizes the symmetry reduction.
    fn att_atoms(&self) -> Vec<Term> {
        let allowed = (self.sim.att_used as usize + 1).min(self.world.att_nonces.len());
        self.world.att_nonces[..allowed].to_vec()
    }

    fn atom_candidates(&self, sort: Sort) -> Vec<Term> {
        let mut out: Vec<Term> = self
            .world
            .atom_vocab
            .iter()
            .filter(|t| sort.admits(t) && self.derivable(t))
            .cloned()
            .collect();
        if sort != Sort::Const {
            out.extend(self.att_atoms());
        }
        out
    }

    fn share_candidates(&self) -> Vec<Term> {
        let mut out: Vec<Term> = self
            .sim
            .knowledge
            .iter()
            .filter(|t| matches!(t, Term::PubShare(_)))
            .cloned()
            .collect();
        for a in self.att_atoms() {
            out.push(Term::share(a));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Everything an unconstrained variable may receive: atoms, observed
    /// terms, and the values of honest sends currently blocked on a
    /// rendezvous (a code computed but not yet displayed), when derivable.
    fn any_candidates(&self) -> Vec<Term> {
        let mut out = self.atom_candidates();
        out.extend(self.sim.knowledge.iter().cloned());
        for (i, proc) in self.sim.procs.iter().enumerate() {
            if proc.status != Status::Active {
                continue;
            }
            let inst = &self.world.instances[i];
            if let Some(Step::Send { tpl, .. }) = inst.role.steps.get(proc.pc) {
                if let Ok(t) = tpl.eval(&proc.env) {
                    if self.derivable(&t) {
                        out.push(t);
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Instantiations of a check template. Free positions are filled with
    /// attacker nonces only: a forged term that coincides with an honest
    /// one is already produced by unification against observed terms, and
    /// key-bound positions reject attacker material outright.
    fn enumerate_tpl(&self, tpl: &Tpl, binds: &[(VarId, Term)]) -> Vec<Term> {
        match tpl {
            Tpl::Var(v) => match lookup(self.env, binds, *v) {
                Some(t) => vec![t],
                None if self.role.key_tainted.get(*v).copied().unwrap_or(false) => Vec::new(),
                None => self.att_atoms(),
            },
            Tpl::Const(c) => vec![Term::cons(c.clone())],
            Tpl::Pair(l, r) => {
                let ls = self.enumerate_tpl(l, binds);
                let rs = self.enumerate_tpl(r, binds);
                let mut out = Vec::new();
                for a in &ls {
                    for b in &rs {
                        out.push(Term::pair(a.clone(), b.clone()));
                    }
                }
                out
            }
            Tpl::Apply(f, args) => {
                let mut acc: Vec<Vec<Term>> = vec![Vec::new()];
                for a in args {
                    let opts = self.enumerate_tpl(a, binds);
                    let mut next = Vec::new();
                    for prefix in &acc {
                        for o in &opts {
                            let mut p = prefix.clone();
                            p.push(o.clone());
                            next.push(p);
                        }
                    }
                    acc = next;
                }
                acc.into_iter()
                    .map(|args| Term::apply(f.clone(), args))
                    .collect()
            }
            Tpl::Share(x) => self
                .enumerate_tpl(x, binds)
                .into_iter()
                .map(Term::share)
                .collect(),
            Tpl::Dh(a, b) => {
                let ls = self.enumerate_tpl(a, binds);
                let rs = self.enumerate_tpl(b, binds);
                let mut out = Vec::new();
                for x in &ls {
                    for y in &rs {
                        out.push(Term::dh(x.clone(), y.clone()));
                    }
                }
                out
            }
        }
    }

    /// Candidate values for a pattern variable, narrowed by the first
    /// later check involving it when possible. Key-bound variables never
    /// receive attacker-nonce material: a completion key containing an
    /// attacker nonce cannot equal any other instance's key, and every
    /// query conclusion requires agreeing completions.
    fn bind_candidates(&self, v: VarId, sort: Sort, binds: &[(VarId, Term)]) -> Vec<Term> {
        let mut out = 'gen: {
            if let Some(&ci) = self.needs.get(&v) {
                if let Step::Check { left, right } = &self.role.steps[ci] {
                    if let Some(ts) = self.refine_from_check(v, left, right, binds) {
                        break 'gen ts;
                    }
                }
            }
            match sort {
                Sort::Atom => self.atom_candidates(),
                Sort::Any => self.any_candidates(),
            }
        };
        out.retain(|t| self.bind_ok(v, t));
        out
    }

    /// A key containing an attacker nonce, or echoing one of the
    /// receiver's own fresh values into a foreign slot, cannot be matched
    /// by any other instance's completion; key-bound variables reject both.
    fn bind_ok(&self, v: VarId, t: &Term) -> bool {
        if !self.role.key_tainted.get(v).copied().unwrap_or(false) {
            return true;
        }
        att_nonces_used(t) == 0 && !self.contains_own_fresh(t)
    }

    fn contains_own_fresh(&self, t: &Term) -> bool {
        let mut hit = false;
        t.walk(&mut |s| {
            if !hit && self.inst.fresh_terms.iter().flatten().any(|f| f == s) {
                hit = true;
            }
        });
        hit
    }

    /// The channel and pattern a variable will be received through, if
    /// some later receive of this role binds it.
    fn future_source_of(&self, w: VarId) -> Option<(usize, &Pat)> {
        for step in &self.role.steps {
            if let Step::Receive { slot, pat } = step {
                let mut binders = Vec::new();
                pat.binders(&mut binders);
                if binders.contains(&w) {
                    return Some((self.inst.slots[*slot], pat));
                }
            }
        }
        None
    }

    /// What `w` could be bound to by honest sends currently parked on its
    /// source channel.
    fn peek_future_bindings(&self, w: VarId, chan: usize, pat: &Pat) -> Vec<Term> {
        let mut out = Vec::new();
        for (i, proc) in self.sim.procs.iter().enumerate() {
            if proc.status != Status::Active {
                continue;
            }
            let inst = &self.world.instances[i];
            if let Some(Step::Send { slot, tpl }) = inst.role.steps.get(proc.pc) {
                if inst.slots[*slot] != chan {
                    continue;
                }
                let Ok(value) = tpl.eval(&proc.env) else {
                    continue;
                };
                if let Some(binds) = pat.match_term(&value, self.env) {
                    if let Some((_, t)) = binds.into_iter().find(|(v, _)| *v == w) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    fn refine_from_check(
        &self,
        v: VarId,
        left: &Tpl,
        right: &Tpl,
        binds: &[(VarId, Term)],
    ) -> Option<Vec<Term>> {
        let bare = |t: &Tpl| matches!(t, Tpl::Var(w) if *w == v);
        if bare(left) || bare(right) {
            let other = if bare(left) { right } else { left };
            // comparison against a bare variable: when it is bound the
            // value is forced; when it will arrive later on a private
            // channel, only values some parked honest send offers can
            // ever satisfy the check; when it will arrive on a controlled
            // channel the attacker picks both sides freely
            if let Tpl::Var(w) = other {
                if let Some(t) = lookup(self.env, binds, *w) {
                    return Some(vec![t]);
                }
                let (chan, src_pat) = self.future_source_of(*w)?;
                if controlled(self.world, &self.sim.leaked, chan, false) {
                    return None;
                }
                return Some(self.peek_future_bindings(*w, chan, src_pat));
            }
            // forgeries over attacker nonces plus observed terms unifiable
            // with the template (replays whose hidden parts the attacker
            // cannot derive, like commitments over a fresh nonce)
            let mut out = self.enumerate_tpl(other, binds);
            for t in self.sim.knowledge.iter() {
                let mut sol = BTreeMap::new();
                if unify(other, t, self.env, binds, &mut sol) {
                    out.push(t.clone());
                }
            }
            return Some(out);
        }
        // v occurs inside one side; solve when the other side is closed
        let mut lv = Vec::new();
        left.vars(&mut lv);
        let (containing, other) = if lv.contains(&v) {
            (left, right)
        } else {
            (right, left)
        };
        if closed(other, self.env, binds) {
            let target = other.eval_with_binds(self.env, binds).ok()?;
            let mut sol = BTreeMap::new();
            if unify(containing, &target, self.env, binds, &mut sol) {
                if let Some(t) = sol.get(&v) {
                    return Some(vec![t.clone()]);
                }
            }
            // the check can never pass, so no delivery is useful
            return Some(Vec::new());
        }
        None
    }

    fn gen_pattern(&self, pat: &Pat, binds: &[(VarId, Term)]) -> Vec<(Term, Vec<(VarId, Term)>)> {
        match pat {
            Pat::Const(c) => vec![(Term::cons(c.clone()), binds.to_vec())],
            Pat::Eq(tpl) => match tpl.eval_with_binds(self.env, binds) {
                Ok(t) => vec![(t, binds.to_vec())],
                Err(_) => Vec::new(),
            },
            Pat::Pair(l, r) => {
                let mut out = Vec::new();
                for (tl, b1) in self.gen_pattern(l, binds) {
                    for (tr, b2) in self.gen_pattern(r, &b1) {
                        out.push((Term::pair(tl.clone(), tr), b2));
                    }
                }
                out
            }
            Pat::Apply(f, pats) => {
                let mut acc: Vec<(Vec<Term>, Vec<(VarId, Term)>)> =
                    vec![(Vec::new(), binds.to_vec())];
                for p in pats {
                    let mut next = Vec::new();
                    for (args, b) in &acc {
                        for (t, b2) in self.gen_pattern(p, b) {
                            let mut a = args.clone();
                            a.push(t);
                            next.push((a, b2));
                        }
                    }
                    acc = next;
                }
                acc.into_iter()
                    .map(|(args, b)| (Term::apply(f.clone(), args), b))
                    .collect()
            }
            Pat::Share(inner) => {
                let mut out = Vec::new();
                for s in self.share_candidates() {
                    if let Term::PubShare(x) = &s {
                        let mut b = binds.to_vec();
                        let before = binds.len();
                        if match_pat_into(inner, x, self.env, &mut b)
                            && b[before..].iter().all(|(v, t)| self.bind_ok(*v, t))
                        {
                            out.push((s.clone(), b));
                        }
                    }
                }
                out
            }
            Pat::Bind(v, sort) => match lookup(self.env, binds, *v) {
                Some(t) => vec![(t, binds.to_vec())],
                None => self
                    .bind_candidates(*v, *sort, binds)
                    .into_iter()
                    .map(|t| {
                        let mut b = binds.to_vec();
                        b.push((*v, t.clone()));
                        (t, b)
                    })
                    .collect(),
            },
        }
    }
}

fn lookup(env: &[Option<Term>], binds: &[(VarId, Term)], v: VarId) -> Option<Term> {
    if let Some((_, t)) = binds.iter().find(|(id, _)| *id == v) {
        return Some(t.clone());
    }
    env.get(v).and_then(|t| t.clone())
}

fn closed(tpl: &Tpl, env: &[Option<Term>], binds: &[(VarId, Term)]) -> bool {
    let mut vs = Vec::new();
    tpl.vars(&mut vs);
    vs.into_iter().all(|v| lookup(env, binds, v).is_some())
}

impl Tpl {
    fn eval_with_binds(&self, env: &[Option<Term>], binds: &[(VarId, Term)]) -> Result<Term> {
        let mut merged = env.to_vec();
        for (v, t) in binds {
            if *v < merged.len() {
                merged[*v] = Some(t.clone());
            }
        }
        self.eval(&merged)
    }
}

/// Structural unification of a template against a ground term: assigns
/// unbound variables, honors bound ones, and tries both argument orders
/// for the commutative DH constructor.
fn unify(
    tpl: &Tpl,
    term: &Term,
    env: &[Option<Term>],
    binds: &[(VarId, Term)],
    sol: &mut BTreeMap<VarId, Term>,
) -> bool {
    match tpl {
        Tpl::Var(v) => {
            if let Some(t) = lookup(env, binds, *v).or_else(|| sol.get(v).cloned()) {
                t == *term
            } else {
                sol.insert(*v, term.clone());
                true
            }
        }
        Tpl::Const(c) => matches!(term, Term::Const(t) if t == c),
        Tpl::Pair(l, r) => match term {
            Term::Pair(a, b) => unify(l, a, env, binds, sol) && unify(r, b, env, binds, sol),
            _ => false,
        },
        Tpl::Apply(f, args) => match term {
            Term::Apply(g, ts) if g == f && ts.len() == args.len() => args
                .iter()
                .zip(ts.iter())
                .all(|(a, t)| unify(a, t, env, binds, sol)),
            _ => false,
        },
        Tpl::Share(x) => match term {
            Term::PubShare(t) => unify(x, t, env, binds, sol),
            _ => false,
        },
        Tpl::Dh(a, b) => match term {
            Term::DhKey(ta, tb) => {
                let snapshot = sol.clone();
                if unify(a, ta, env, binds, sol) && unify(b, tb, env, binds, sol) {
                    return true;
                }
                *sol = snapshot;
                unify(a, tb, env, binds, sol) && unify(b, ta, env, binds, sol)
            }
            _ => false,
        },
    }
}

fn match_pat_into(pat: &Pat, term: &Term, env: &[Option<Term>], binds: &mut Vec<(VarId, Term)>) -> bool {
    let mut merged = env.to_vec();
    for (v, t) in binds.iter() {
        if *v < merged.len() {
            merged[*v] = Some(t.clone());
        }
    }
    match pat.match_term(term, &merged) {
        Some(new_binds) => {
            binds.extend(new_binds);
            true
        }
        None => false,
    }
}

fn delivery_candidates(world: &World, sim: &Sim, i: usize) -> Vec<Term> {
    let proc = &sim.procs[i];
    let inst = &world.instances[i];
    let Some(Step::Receive { pat, .. }) = inst.role.steps.get(proc.pc) else {
        return Vec::new();
    };
    let gen = Gen {
        world,
        sim,
        env: &proc.env,
        needs: &inst.role.receive_needs[proc.pc],
        role: &inst.role,
        inst,
    };
    let mut out: Vec<Term> = Vec::new();
    for (t, _) in gen.gen_pattern(pat, &[]) {
        out.push(t.normalize());
    }
    let allowed_atts = (sim.att_used as usize + 1).min(world.att_nonces.len()) as u8;
    out.retain(|t| {
        pat.match_term(t, &proc.env).is_some()
            && att_nonces_used(t) <= allowed_atts
            && gen.derivable(t)
    });
    out.sort();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// Extension enumeration

/// All one-step extensions of a configuration, in canonical order.
fn extensions(world: &World, state: &State, sim: &Sim, opts: &ExploreOpts) -> Vec<State> {
    let mut out = Vec::new();
    for (k, _) in world.dynamic.iter().enumerate() {
        if state.dyn_fired & (1 << k) == 0 {
            let mut child = state.clone();
            child.dyn_fired |= 1 << k;
            out.push(child);
        }
    }
    for (i, proc) in sim.procs.iter().enumerate() {
        if proc.status != Status::Active {
            continue;
        }
        // only instances waiting for a fresh input are extendable
        if proc.next_input < state.inputs[i].len() {
            continue;
        }
        let inst = &world.instances[i];
        let Some(Step::Receive { slot, pat }) = inst.role.steps.get(proc.pc) else {
            continue;
        };
        let chan = inst.slots[*slot];
        if controlled(world, &sim.leaked, chan, opts.passive) {
            if opts.passive {
                continue;
            }
            for term in delivery_candidates(world, sim, i) {
                let mut child = state.clone();
                child.inputs[i].push(InputSrc::Att(term));
                out.push(child);
            }
        } else {
            // rendezvous with any sender currently parked at a matching send
            for (j, other) in sim.procs.iter().enumerate() {
                if i == j || other.status != Status::Active {
                    continue;
                }
                let oinst = &world.instances[j];
                let Some(Step::Send { slot: oslot, tpl }) = oinst.role.steps.get(other.pc) else {
                    continue;
                };
                if oinst.slots[*oslot] != chan {
                    continue;
                }
                // the sender must itself be stuck (not waiting on its own input)
                if other.next_input < state.inputs[j].len() {
                    continue;
                }
                let Ok(term) = tpl.eval(&other.env) else {
                    continue;
                };
                if pat.match_term(&term, &proc.env).is_some() {
                    let mut child = state.clone();
                    child.inputs[i].push(InputSrc::From {
                        sender: j as u16,
                        step: other.pc as u16,
                    });
                    out.push(child);
                }
            }
        }
    }
    out
}

fn depth_of(state: &State) -> u32 {
    state.inputs.iter().map(|v| v.len() as u32).sum::<u32>() + state.dyn_fired.count_ones()
}

// ---------------------------------------------------------------------------
// Breadth-first exploration over configurations

struct Graph {
    index: HashMap<u64, Vec<State>>,
    count: usize,
}

fn state_hash(s: &State) -> u64 {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

impl Graph {
    fn insert(&mut self, state: &State) -> bool {
        let h = state_hash(state);
        let bucket = self.index.entry(h).or_default();
        if bucket.iter().any(|s| s == state) {
            return false;
        }
        bucket.push(state.clone());
        self.count += 1;
        true
    }
}

/// The result of exploring a scenario: every maximal trace (one per
/// maximal configuration, in canonical order), plus bound bookkeeping.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub traces: Vec<Trace>,
    pub bounded: bool,
    pub states: usize,
}

/// One query's verdict from [`analyze`].
#[derive(Debug, Clone)]
pub struct Verdict {
    pub query: String,
    pub holds: bool,
    /// The minimal counterexample trace, with its violation embedded.
    pub trace: Option<Box<Trace>>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub verdicts: Vec<Verdict>,
    pub bounded: bool,
    pub states: usize,
    pub maximal_traces: usize,
}

fn build_trace(world: &World, sim: &Sim, bounded: bool) -> Trace {
    let mut trace = Trace {
        schema_version: TRACE_SCHEMA_VERSION,
        model: world.model.name.clone(),
        scenario_name: world.scenario.name.clone(),
        scenario_fingerprint: world.scenario.fingerprint(),
        bounded,
        entries: sim.entries.clone(),
        final_knowledge: sim.knowledge.iter().cloned().collect(),
        violation: None,
    };
    // synthesize knowledge events for derivable completed session keys
    let depth = world.scenario.bounds.deduction_depth;
    for k in trace.session_keys() {
        if sim.knowledge.derives(&world.model.symbols, &k, depth) {
            trace.entries.push(Entry::Event {
                by: ATTACKER.into(),
                event: Event::new(EventKind::AttackerObtained, vec![Value::Term(k)]),
            });
        }
    }
    trace
}

struct Bfs<'a> {
    world: &'a World,
    opts: ExploreOpts,
    graph: Graph,
    frontier: Vec<State>,
    bounded: bool,
}

/// A frontier configuration expanded: its children, and its realized
/// simulation when it turned out maximal.
type Expansion = (Vec<State>, Option<Sim>);

impl<'a> Bfs<'a> {
    fn new(world: &'a World, opts: ExploreOpts) -> Bfs<'a> {
        let root = State {
            inputs: vec![Vec::new(); world.instances.len()],
            dyn_fired: 0,
        };
        let mut graph = Graph {
            index: HashMap::new(),
            count: 0,
        };
        graph.insert(&root);
        Bfs {
            world,
            opts,
            graph,
            frontier: vec![root],
            bounded: false,
        }
    }

    /// Expands one level; returns the simulations of maximal
    /// configurations discovered, in deterministic order.
    fn step_level(&mut self) -> Result<Vec<Sim>> {
        let frontier = std::mem::take(&mut self.frontier);
        let world = self.world;
        let opts = &self.opts;
        let expand = |state: &State| -> Result<Expansion> {
            let sim = simulate(world, state, opts)?;
            let children = extensions(world, state, &sim, opts);
            if children.is_empty() {
                Ok((children, Some(sim)))
            } else {
                Ok((children, None))
            }
        };
        let expansions: Vec<Expansion> = if self.opts.jobs > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.opts.jobs)
                .build()
                .map_err(|e| Error::InvalidScenario(format!("thread pool: {e}")))?;
            pool.install(|| frontier.par_iter().map(expand).collect::<Result<Vec<_>>>())?
        } else {
            frontier.iter().map(expand).collect::<Result<Vec<_>>>()?
        };
        let mut maximal = Vec::new();
        for (state, (children, max_sim)) in frontier.iter().zip(expansions) {
            if let Some(sim) = max_sim {
                maximal.push(sim);
                continue;
            }
            if depth_of(state) >= self.world.scenario.bounds.max_steps {
                // cut off rather than complete: report the bound distinctly
                self.bounded = true;
                continue;
            }
            for child in children {
                if self.graph.count >= self.world.scenario.bounds.max_states {
                    self.bounded = true;
                    break;
                }
                if self.graph.insert(&child) {
                    self.frontier.push(child);
                }
            }
        }
        Ok(maximal)
    }

    fn done(&self) -> bool {
        self.frontier.is_empty()
    }
}

/// Level-size logging for debugging exploration blowups, enabled by the
/// MISBIND_TRACE_LEVELS environment variable.
fn trace_levels() -> bool {
    std::env::var_os("MISBIND_TRACE_LEVELS").is_some()
}

/// Explores every execution of the scenario within bounds and returns all
/// maximal traces, deduplicated by configuration.
pub fn explore(world: &World, opts: &ExploreOpts) -> Result<Exploration> {
    let mut bfs = Bfs::new(world, opts.clone());
    let mut traces = Vec::new();
    let mut level = 0u32;
    while !bfs.done() {
        if trace_levels() {
            eprintln!(
                "level {level}: frontier {} states {}",
                bfs.frontier.len(),
                bfs.graph.count
            );
            level += 1;
        }
        for sim in bfs.step_level()? {
            traces.push(build_trace(world, &sim, bfs.bounded));
        }
    }
    let bounded = bfs.bounded;
    for t in &mut traces {
        t.bounded = bounded;
    }
    Ok(Exploration {
        traces,
        bounded,
        states: bfs.graph.count,
    })
}

/// Runs the queries over every maximal trace, returning per query either
/// `holds` (within bounds) or the minimal counterexample: the first
/// violating trace by configuration size, ties broken by entry count,
/// then by canonical trace ordering.
pub fn analyze(world: &World, queries: &[Query], opts: &ExploreOpts) -> Result<Analysis> {
    for q in queries {
        q.validate()?;
    }
    let mut bfs = Bfs::new(world, opts.clone());
    let mut found: Vec<Option<Box<Trace>>> = vec![None; queries.len()];
    let mut maximal_traces = 0usize;
    while !bfs.done() {
        let maximal = bfs.step_level()?;
        let mut level_hits: Vec<Vec<Trace>> = vec![Vec::new(); queries.len()];
        for sim in maximal {
            maximal_traces += 1;
            let trace = build_trace(world, &sim, bfs.bounded);
            let events = trace.events_cloned();
            for (qi, q) in queries.iter().enumerate() {
                if found[qi].is_some() {
                    continue;
                }
                if let QueryOutcome::Violated(v) = check_query(&events, q)? {
                    let mut t = trace.clone();
                    t.violation = Some(v);
                    level_hits[qi].push(t);
                }
            }
        }
        for (qi, hits) in level_hits.into_iter().enumerate() {
            if found[qi].is_some() || hits.is_empty() {
                continue;
            }
            let best = hits
                .into_iter()
                .min_by_key(|t| (t.entries.len(), t.canonical_key()))
                .unwrap();
            found[qi] = Some(Box::new(best));
        }
        if opts.early_stop && found.iter().all(|f| f.is_some()) {
            bfs.bounded = true;
            break;
        }
    }
    let bounded = bfs.bounded;
    let verdicts = queries
        .iter()
        .zip(found)
        .map(|(q, f)| Verdict {
            query: q.name.clone(),
            holds: f.is_none(),
            trace: f.map(|mut t| {
                t.bounded = bounded;
                t
            }),
        })
        .collect();
    Ok(Analysis {
        verdicts,
        bounded,
        states: bfs.graph.count,
        maximal_traces,
    })
}

// ---------------------------------------------------------------------------
// Independent trace validation

/// Replays a trace entry by entry against the world, re-verifying pattern
/// matches, checks, event emissions, and the attacker-derivability of
/// every attacker-origin delivery. Decoupled from the explorer's candidate
/// machinery: any entry sequence consistent with the step semantics
/// validates, whether or not the explorer would have produced it.
pub fn validate_trace(world: &World, trace: &Trace) -> Result<()> {
    let v = Validator { world };
    v.run(trace)
}

struct Validator<'a> {
    world: &'a World,
}

struct VState {
    procs: Vec<ProcSim>,
    knowledge: KnowledgeSet,
    leaked: Vec<bool>,
    dyn_done: Vec<bool>,
}

impl<'a> Validator<'a> {
    fn fail(&self, index: usize, reason: impl Into<String>) -> Error {
        Error::InvalidTrace {
            index,
            reason: reason.into(),
        }
    }

    fn run(&self, trace: &Trace) -> Result<()> {
        let world = self.world;
        let mut sim = VState {
            procs: world
                .instances
                .iter()
                .map(|inst| ProcSim {
                    pc: 0,
                    status: Status::Active,
                    env: inst.init_env.clone(),
                    next_input: 0,
                })
                .collect(),
            knowledge: {
                let mut k = KnowledgeSet::new();
                for c in &world.model.constants {
                    k.insert(Term::cons(c.clone()));
                }
                for d in &world.scenario.devices {
                    k.insert(identity_term(&d.name));
                }
                for n in &world.att_nonces {
                    k.insert(n.clone());
                }
                k
            },
            leaked: vec![false; world.channels.len()],
            dyn_done: vec![false; world.dynamic.len()],
        };
        // setup compromise events, in scenario order
        let mut idx = 0;
        for d in &world.scenario.devices {
            if !d.compromised {
                continue;
            }
            let (ev, chans, extra) = world.device_compromise(&d.name);
            match trace.entries.get(idx) {
                Some(Entry::Event { by, event }) if by == SETUP && *event == ev => {}
                _ => return Err(self.fail(idx, format!("expected setup compromise of {}", d.name))),
            }
            for c in chans {
                sim.leaked[c] = true;
            }
            for t in extra {
                sim.knowledge.insert(t);
            }
            idx += 1;
        }
        for u in &world.scenario.users {
            if let UserDecl::Compromised { name, .. } = u {
                let (ev, chans) = world.user_compromise(name);
                match trace.entries.get(idx) {
                    Some(Entry::Event { by, event }) if by == SETUP && *event == ev => {}
                    _ => {
                        return Err(self.fail(idx, format!("expected setup compromise of {name}")))
                    }
                }
                for c in chans {
                    sim.leaked[c] = true;
                }
                idx += 1;
            }
        }
        self.silent_drain_all(&mut sim)?;

        let mut attacker_obtained = Vec::new();
        while idx < trace.entries.len() {
            let entry = &trace.entries[idx];
            match entry {
                Entry::Event { by, event } if event.kind == EventKind::AttackerObtained => {
                    if by != ATTACKER {
                        return Err(self.fail(idx, "knowledge event not attributed to attacker"));
                    }
                    attacker_obtained.push((idx, event.clone()));
                }
                Entry::Event { by, event } if by == ATTACKER && event.kind.is_compromise() => {
                    self.apply_dynamic(&mut sim, event)
                        .map_err(|r| self.fail(idx, r))?;
                }
                Entry::Event { by, event } => {
                    let i = self
                        .world
                        .instance_index(by)
                        .ok_or_else(|| self.fail(idx, format!("unknown instance {by}")))?;
                    self.expect_emit(&mut sim, i, event)
                        .map_err(|r| self.fail(idx, r))?;
                }
                Entry::Delivery {
                    chan,
                    term,
                    origin,
                    to,
                } => {
                    self.apply_delivery(&mut sim, chan, term, origin, to)
                        .map_err(|r| self.fail(idx, r))?;
                }
            }
            idx += 1;
        }

        if sim.knowledge != trace.final_knowledge_set() {
            return Err(self.fail(trace.entries.len(), "final knowledge mismatch"));
        }
        // the synthesized knowledge events must list exactly the derivable
        // completed session keys
        let depth = world.scenario.bounds.deduction_depth;
        let mut expected: Vec<Term> = trace
            .session_keys()
            .into_iter()
            .filter(|k| sim.knowledge.derives(&world.model.symbols, k, depth))
            .collect();
        expected.sort();
        let mut listed: Vec<Term> = attacker_obtained
            .iter()
            .filter_map(|(_, e)| match e.args.first() {
                Some(Value::Term(t)) => Some(t.clone()),
                _ => None,
            })
            .collect();
        listed.sort();
        if expected != listed {
            let at = attacker_obtained
                .first()
                .map(|(i, _)| *i)
                .unwrap_or(trace.entries.len());
            return Err(self.fail(at, "attacker knowledge events inconsistent"));
        }
        Ok(())
    }

    fn apply_dynamic(&self, sim: &mut VState, event: &Event) -> std::result::Result<(), String> {
        for (k, target) in self.world.dynamic.iter().enumerate() {
            if sim.dyn_done[k] {
                continue;
            }
            let (ev, chans, extra) = match target {
                DynTarget::Device(d) => self.world.device_compromise(d),
                DynTarget::User(u) => {
                    let (ev, chans) = self.world.user_compromise(u);
                    (ev, chans, Vec::new())
                }
            };
            if ev == *event {
                sim.dyn_done[k] = true;
                for c in chans {
                    sim.leaked[c] = true;
                }
                for t in extra {
                    sim.knowledge.insert(t);
                }
                return Ok(());
            }
        }
        Err("compromise event without a matching dynamic target".into())
    }

    /// Drains fresh names and checks (silent steps only; emits and sends
    /// correspond to entries).
    fn silent_drain(&self, sim: &mut VState, i: usize) -> Result<()> {
        let inst = &self.world.instances[i];
        loop {
            if sim.procs[i].status != Status::Active {
                return Ok(());
            }
            let pc = sim.procs[i].pc;
            if pc >= inst.role.steps.len() {
                sim.procs[i].status = Status::Done;
                return Ok(());
            }
            match &inst.role.steps[pc] {
                Step::Fresh(v) => {
                    sim.procs[i].env[*v] = inst.fresh_terms[*v].clone();
                    sim.procs[i].pc += 1;
                }
                Step::Check { left, right } => {
                    let l = left.eval(&sim.procs[i].env)?;
                    let r = right.eval(&sim.procs[i].env)?;
                    if l == r {
                        sim.procs[i].pc += 1;
                    } else {
                        sim.procs[i].status = Status::Aborted;
                        return Ok(());
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn silent_drain_all(&self, sim: &mut VState) -> Result<()> {
        for i in 0..self.world.instances.len() {
            self.silent_drain(sim, i)?;
        }
        Ok(())
    }

    fn expect_emit(
        &self,
        sim: &mut VState,
        i: usize,
        event: &Event,
    ) -> std::result::Result<(), String> {
        if sim.procs[i].status != Status::Active {
            return Err(format!(
                "instance {} is not active",
                self.world.instances[i].name
            ));
        }
        let pc = sim.procs[i].pc;
        let inst = &self.world.instances[i];
        let Step::Emit { kind, args } = &inst.role.steps[pc] else {
            return Err(format!("instance {} is not at an emit", inst.name));
        };
        let expected = eval_event(self.world, i, &sim.procs[i].env, *kind, args)
            .map_err(|e| e.to_string())?;
        if expected != *event {
            return Err(format!("expected event {expected}, trace has {event}"));
        }
        sim.procs[i].pc += 1;
        self.silent_drain(sim, i).map_err(|e| e.to_string())
    }

    fn apply_delivery(
        &self,
        sim: &mut VState,
        chan_name: &str,
        term: &Term,
        origin: &str,
        to: &str,
    ) -> std::result::Result<(), String> {
        let world = self.world;
        let chan = world
            .chan_index(chan_name)
            .ok_or_else(|| format!("unknown channel {chan_name}"))?;
        let chan_controlled = world.channels[chan].public || sim.leaked[chan];
        let depth = world.scenario.bounds.deduction_depth;
        // sender side
        if origin != ATTACKER {
            let i = world
                .instance_index(origin)
                .ok_or_else(|| format!("unknown sender {origin}"))?;
            if sim.procs[i].status != Status::Active {
                return Err(format!("sender {origin} is not active"));
            }
            let pc = sim.procs[i].pc;
            let Step::Send { slot, tpl } = &world.instances[i].role.steps[pc] else {
                return Err(format!("sender {origin} is not at a send"));
            };
            if world.instances[i].slots[*slot] != chan {
                return Err("send on the wrong channel".into());
            }
            let sent = tpl.eval(&sim.procs[i].env).map_err(|e| e.to_string())?;
            if sent != *term {
                return Err(format!("sender would send {sent}, trace has {term}"));
            }
            sim.procs[i].pc += 1;
            self.silent_drain(sim, i).map_err(|e| e.to_string())?;
        } else {
            if !chan_controlled {
                return Err("attacker delivery on a private channel".into());
            }
            if !sim.knowledge.derives(&world.model.symbols, term, depth) {
                return Err(format!("attacker cannot derive {term}"));
            }
        }
        // receiver side
        if to == ATTACKER {
            if !chan_controlled {
                return Err("attacker absorbed a private-channel send".into());
            }
            sim.knowledge.insert(term.clone());
        } else {
            let j = world
                .instance_index(to)
                .ok_or_else(|| format!("unknown receiver {to}"))?;
            if sim.procs[j].status != Status::Active {
                return Err(format!("receiver {to} is not active"));
            }
            let pc = sim.procs[j].pc;
            let Step::Receive { slot, pat } = &world.instances[j].role.steps[pc] else {
                return Err(format!("receiver {to} is not at a receive"));
            };
            if world.instances[j].slots[*slot] != chan {
                return Err("receive on the wrong channel".into());
            }
            if origin != ATTACKER && chan_controlled {
                return Err("honest delivery on an attacker-controlled channel".into());
            }
            let binds = pat
                .match_term(term, &sim.procs[j].env)
                .ok_or_else(|| format!("pattern mismatch for {term}"))?;
            for (v, t) in binds {
                sim.procs[j].env[v] = Some(t);
            }
            sim.procs[j].pc += 1;
            self.silent_drain(sim, j).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::scenario::builtin_scenario;

    fn world(model: &str, scenario: &str) -> World {
        let m = models::build(model).unwrap();
        let s = builtin_scenario(model, scenario).unwrap();
        World::build(&m, &s).unwrap()
    }

    #[test]
    fn honest_ssp_completes_with_matching_keys() {
        let w = world("ssp-nc", "honest");
        let ex = explore(&w, &ExploreOpts::default()).unwrap();
        assert!(!ex.traces.is_empty());
        let complete = ex.traces.iter().any(|t| {
            let inits = t.events_of(EventKind::InitiatorComplete);
            let nons = t.events_of(EventKind::NoninitiatorComplete);
            !inits.is_empty()
                && !nons.is_empty()
                && inits[0].1.session_key() == nons[0].1.session_key()
        });
        assert!(complete, "no honest completion trace found");
    }

    #[test]
    fn every_explored_trace_validates() {
        let w = world("ssp-nc", "honest");
        let ex = explore(&w, &ExploreOpts::default()).unwrap();
        for t in &ex.traces {
            validate_trace(&w, t).unwrap();
        }
    }

    #[test]
    fn tampered_trace_fails_validation() {
        let w = world("ssp-nc", "honest");
        let ex = explore(&w, &ExploreOpts::default()).unwrap();
        let mut t = ex.traces[0].clone();
        // inject an attacker delivery of an underivable fresh nonce
        t.entries.insert(
            1,
            Entry::Delivery {
                chan: "net".into(),
                term: Term::nonce("ghost"),
                origin: ATTACKER.into(),
                to: "A".into(),
            },
        );
        assert!(validate_trace(&w, &t).is_err());
    }

    #[test]
    fn passive_attacker_yields_only_honest_runs() {
        let w = world("ssp-nc", "honest");
        let ex = explore(
            &w,
            &ExploreOpts {
                passive: true,
                ..Default::default()
            },
        )
        .unwrap();
        // with no tampering the only completions carry one shared key
        for t in &ex.traces {
            let inits = t.events_of(EventKind::InitiatorComplete);
            let nons = t.events_of(EventKind::NoninitiatorComplete);
            for (_, i) in &inits {
                for (_, n) in &nons {
                    assert_eq!(i.session_key(), n.session_key());
                }
            }
        }
        assert!(ex
            .traces
            .iter()
            .any(|t| !t.events_of(EventKind::InitiatorComplete).is_empty()));
    }
}

/// Prints delivery-candidate width statistics while exploring; debug aid.
pub fn explore_debug_widths(world: &World) {
    let opts = ExploreOpts::default();
    let mut bfs = Bfs::new(world, opts.clone());
    let mut widths: BTreeMap<(String, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    let mut level = 0;
    while !bfs.done() {
        let frontier = bfs.frontier.clone();
        for state in &frontier {
            if let Ok(sim) = simulate(world, state, &opts) {
                for (i, proc) in sim.procs.iter().enumerate() {
                    if proc.status != Status::Active || proc.next_input < state.inputs[i].len() {
                        continue;
                    }
                    let inst = &world.instances[i];
                    if let Some(Step::Receive { slot, .. }) = inst.role.steps.get(proc.pc) {
                        if controlled(world, &sim.leaked, inst.slots[*slot], false) {
                            let n = delivery_candidates(world, &sim, i).len();
                            *widths
                                .entry((inst.name.clone(), proc.pc))
                                .or_default()
                                .entry(n)
                                .or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        let _ = bfs.step_level();
        level += 1;
        eprintln!("level {level} frontier {} states {}", bfs.frontier.len(), bfs.graph.count);
        if bfs.graph.count > 60000 {
            break;
        }
    }
    for ((name, pc), hist) in widths {
        eprintln!("{name} pc={pc}: {hist:?}");
    }
}
