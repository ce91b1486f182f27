//! Role programs: scripted receive/check/send/event sequences defining one
//! protocol participant (a device, a user, a server, a peer).
//!
//! A role is a straight-line script over named channel slots. Receive
//! patterns bind variables used by later steps; a static well-formedness
//! check enforces that every variable is bound before use. Channel handles
//! and user identifiers are not expressible in message templates, so a
//! role cannot leak them onto a channel even by mistake.

use crate::deduce::SymbolTable;
use crate::error::{Error, Result};
use crate::event::EventKind;
use crate::term::Term;
use serde::{Deserialize, Serialize};

pub type VarId = usize;
pub type SlotId = usize;

/// Shape restriction for pattern variables, mirroring typed pattern
/// matching: a nonce-typed input rejects composite or constant payloads
/// outright. The attacker's delivery enumeration also draws candidates by
/// sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sort {
    /// Any term.
    Any,
    /// Atoms only: nonces and public constants.
    Atom,
    /// Fresh-name atoms only.
    Nonce,
    /// Public constants only.
    Const,
}

impl Sort {
    pub fn admits(self, term: &crate::term::Term) -> bool {
        use crate::term::Term;
        match self {
            Sort::Any => true,
            Sort::Atom => term.is_atom(),
            Sort::Nonce => matches!(term, Term::Nonce(_)),
            Sort::Const => matches!(term, Term::Const(_)),
        }
    }
}

/// A message template: a term with role variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tpl {
    Var(VarId),
    Const(String),
    Pair(Box<Tpl>, Box<Tpl>),
    Apply(String, Vec<Tpl>),
    Share(Box<Tpl>),
    Dh(Box<Tpl>, Box<Tpl>),
}

impl Tpl {
    /// Instantiates the template under an environment. Fails on unbound
    /// variables, which well-formed roles never hit.
    pub fn eval(&self, env: &[Option<Term>]) -> Result<Term> {
        Ok(match self {
            Tpl::Var(v) => env
                .get(*v)
                .and_then(|t| t.clone())
                .ok_or_else(|| Error::InvalidScenario(format!("unbound variable #{v}")))?,
            Tpl::Const(c) => Term::cons(c.clone()),
            Tpl::Pair(l, r) => Term::pair(l.eval(env)?, r.eval(env)?),
            Tpl::Apply(f, args) => Term::apply(
                f.clone(),
                args.iter().map(|a| a.eval(env)).collect::<Result<_>>()?,
            ),
            Tpl::Share(x) => Term::share(x.eval(env)?),
            Tpl::Dh(a, b) => Term::dh(a.eval(env)?, b.eval(env)?),
        }
        .normalize())
    }

    /// True if every variable of the template is bound in `env`.
    pub fn closed_under(&self, env: &[Option<Term>]) -> bool {
        match self {
            Tpl::Var(v) => env.get(*v).map(|t| t.is_some()).unwrap_or(false),
            Tpl::Const(_) => true,
            Tpl::Pair(l, r) | Tpl::Dh(l, r) => l.closed_under(env) && r.closed_under(env),
            Tpl::Apply(_, args) => args.iter().all(|a| a.closed_under(env)),
            Tpl::Share(x) => x.closed_under(env),
        }
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Tpl::Var(v) => out.push(*v),
            Tpl::Const(_) => {}
            Tpl::Pair(l, r) | Tpl::Dh(l, r) => {
                l.vars(out);
                r.vars(out);
            }
            Tpl::Apply(_, args) => {
                for a in args {
                    a.vars(out);
                }
            }
            Tpl::Share(x) => x.vars(out),
        }
    }
}

/// A receive pattern. `Bind` introduces a variable; `Eq` requires equality
/// with an instantiated template; the structural forms match constructor
/// shape recursively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pat {
    Bind(VarId, Sort),
    Eq(Tpl),
    Const(String),
    Pair(Box<Pat>, Box<Pat>),
    Apply(String, Vec<Pat>),
    Share(Box<Pat>),
}

impl Pat {
    /// Matches `term` against the pattern under `env`, returning the new
    /// bindings in pattern order. A bound variable occurring again must
    /// match its existing value.
    pub fn match_term(&self, term: &Term, env: &[Option<Term>]) -> Option<Vec<(VarId, Term)>> {
        let mut binds = Vec::new();
        if self.match_into(term, env, &mut binds) {
            Some(binds)
        } else {
            None
        }
    }

    fn match_into(&self, term: &Term, env: &[Option<Term>], binds: &mut Vec<(VarId, Term)>) -> bool {
        match self {
            Pat::Bind(v, sort) => {
                let prior = env
                    .get(*v)
                    .and_then(|t| t.as_ref())
                    .or_else(|| binds.iter().find(|(id, _)| id == v).map(|(_, t)| t));
                match prior {
                    Some(bound) => bound == term,
                    None => {
                        if !sort.admits(term) {
                            return false;
                        }
                        binds.push((*v, term.clone()));
                        true
                    }
                }
            }
            Pat::Eq(tpl) => match tpl.eval_with(env, binds) {
                Ok(expected) => expected == *term,
                Err(_) => false,
            },
            Pat::Const(c) => matches!(term, Term::Const(t) if t == c),
            Pat::Pair(pl, pr) => match term {
                Term::Pair(l, r) => {
                    pl.match_into(l, env, binds) && pr.match_into(r, env, binds)
                }
                _ => false,
            },
            Pat::Apply(f, pats) => match term {
                Term::Apply(g, args) if g == f && args.len() == pats.len() => pats
                    .iter()
                    .zip(args.iter())
                    .all(|(p, a)| p.match_into(a, env, binds)),
                _ => false,
            },
            Pat::Share(p) => match term {
                Term::PubShare(x) => p.match_into(x, env, binds),
                _ => false,
            },
        }
    }

    /// Variables the pattern introduces.
    pub fn binders(&self, out: &mut Vec<VarId>) {
        match self {
            Pat::Bind(v, _) => out.push(*v),
            Pat::Eq(_) | Pat::Const(_) => {}
            Pat::Pair(l, r) => {
                l.binders(out);
                r.binders(out);
            }
            Pat::Apply(_, pats) => {
                for p in pats {
                    p.binders(out);
                }
            }
            Pat::Share(p) => p.binders(out),
        }
    }

    fn eq_template_vars(&self, out: &mut Vec<VarId>) {
        match self {
            Pat::Eq(tpl) => tpl.vars(out),
            Pat::Bind(_, _) | Pat::Const(_) => {}
            Pat::Pair(l, r) => {
                l.eq_template_vars(out);
                r.eq_template_vars(out);
            }
            Pat::Apply(_, pats) => {
                for p in pats {
                    p.eq_template_vars(out);
                }
            }
            Pat::Share(p) => p.eq_template_vars(out),
        }
    }
}

impl Tpl {
    /// Like [`Tpl::eval`], but consults in-flight bindings first.
    fn eval_with(&self, env: &[Option<Term>], binds: &[(VarId, Term)]) -> Result<Term> {
        match self {
            Tpl::Var(v) => {
                if let Some((_, t)) = binds.iter().find(|(id, _)| id == v) {
                    return Ok(t.clone());
                }
                env.get(*v)
                    .and_then(|t| t.clone())
                    .ok_or_else(|| Error::InvalidScenario(format!("unbound variable #{v}")))
            }
            Tpl::Const(c) => Ok(Term::cons(c.clone())),
            Tpl::Pair(l, r) => Ok(Term::pair(l.eval_with(env, binds)?, r.eval_with(env, binds)?)),
            Tpl::Apply(f, args) => Ok(Term::apply(
                f.clone(),
                args.iter()
                    .map(|a| a.eval_with(env, binds))
                    .collect::<Result<_>>()?,
            )),
            Tpl::Share(x) => Ok(Term::share(x.eval_with(env, binds)?)),
            Tpl::Dh(a, b) => Ok(Term::dh(a.eval_with(env, binds)?, b.eval_with(env, binds)?)),
        }
        .map(|t| t.normalize())
    }
}

/// An argument of an event template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvArg {
    /// The instance's own channel handle.
    SelfChan,
    /// The channel bound to a slot.
    Slot(SlotId),
    /// The instance's user identifier.
    User,
    /// A message term.
    Tpl(Tpl),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Fresh(VarId),
    Send { slot: SlotId, tpl: Tpl },
    Receive { slot: SlotId, pat: Pat },
    Check { left: Tpl, right: Tpl },
    Emit { kind: EventKind, args: Vec<EvArg> },
}

/// A scripted participant. `params` are variables bound at instantiation
/// time (identity constants, a user's expected peer identifiers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleProgram {
    pub name: String,
    pub slots: Vec<String>,
    pub vars: Vec<String>,
    pub params: Vec<VarId>,
    pub steps: Vec<Step>,
    /// For each step index: if it is a `Receive`, a map from each bound
    /// variable to the index of the first later `Check` mentioning it. The
    /// attacker's delivery enumeration narrows candidates against that
    /// check.
    pub receive_needs: Vec<std::collections::BTreeMap<VarId, usize>>,
    /// Variables that flow into a session key (the final argument of a
    /// completion or agreement event). Two instances can only complete
    /// with equal keys when the key-bound inputs are attacker-nonce-free,
    /// so the delivery enumeration restricts those positions accordingly.
    pub key_tainted: Vec<bool>,
}

impl RoleProgram {
    /// Binding discipline: every variable used in a template was bound by
    /// an earlier Fresh, Receive, or a param; function arities match the
    /// symbol table; emit argument shapes match the event kind.
    pub fn check_wellformed(&self, syms: &SymbolTable) -> Result<()> {
        let mut bound = vec![false; self.vars.len()];
        for &p in &self.params {
            bound[p] = true;
        }
        let err = |reason: String| Error::IllFormedRole {
            role: self.name.clone(),
            reason,
        };
        let check_tpl = |tpl: &Tpl, bound: &[bool]| -> Result<()> {
            let mut vs = Vec::new();
            tpl.vars(&mut vs);
            for v in vs {
                if !bound[v] {
                    return Err(err(format!("use of unbound variable {}", self.vars[v])));
                }
            }
            check_arities(tpl, syms).map_err(|reason| err(reason))
        };
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Fresh(v) => bound[*v] = true,
                Step::Send { slot, tpl } => {
                    if *slot >= self.slots.len() {
                        return Err(err(format!("step {i}: slot out of range")));
                    }
                    check_tpl(tpl, &bound)?;
                }
                Step::Receive { slot, pat } => {
                    if *slot >= self.slots.len() {
                        return Err(err(format!("step {i}: slot out of range")));
                    }
                    let mut eq_vars = Vec::new();
                    pat.eq_template_vars(&mut eq_vars);
                    for v in eq_vars {
                        if !bound[v] {
                            return Err(err(format!(
                                "step {i}: equality pattern uses unbound {}",
                                self.vars[v]
                            )));
                        }
                    }
                    let mut binders = Vec::new();
                    pat.binders(&mut binders);
                    for v in binders {
                        bound[v] = true;
                    }
                }
                Step::Check { left, right } => {
                    check_tpl(left, &bound)?;
                    check_tpl(right, &bound)?;
                }
                Step::Emit { kind, args } => {
                    if kind.arity() != args.len() {
                        return Err(err(format!(
                            "step {i}: {} expects {} arguments",
                            kind.name(),
                            kind.arity()
                        )));
                    }
                    for a in args {
                        match a {
                            EvArg::Tpl(tpl) => check_tpl(tpl, &bound)?,
                            EvArg::Slot(s) if *s >= self.slots.len() => {
                                return Err(err(format!("step {i}: slot out of range")))
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Computes the receive-needs table; call once after construction.
    pub fn analyze_needs(&mut self) {
        self.receive_needs = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, step)| {
                let mut needs = std::collections::BTreeMap::new();
                if let Step::Receive { pat, .. } = step {
                    let mut binders = Vec::new();
                    pat.binders(&mut binders);
                    for v in binders {
                        let hit = self.steps[i + 1..].iter().enumerate().find_map(|(j, s)| {
                            if let Step::Check { left, right } = s {
                                let mut vs = Vec::new();
                                left.vars(&mut vs);
                                right.vars(&mut vs);
                                if vs.contains(&v) {
                                    return Some(i + 1 + j);
                                }
                            }
                            None
                        });
                        if let Some(idx) = hit {
                            needs.insert(v, idx);
                        }
                    }
                }
                needs
            })
            .collect();
        let mut tainted = vec![false; self.vars.len()];
        for step in &self.steps {
            if let Step::Emit { kind, args } = step {
                let key_arg = match kind {
                    EventKind::Running | EventKind::Commit => args.last(),
                    k if k.is_completion() => args.last(),
                    _ => None,
                };
                if let Some(EvArg::Tpl(tpl)) = key_arg {
                    let mut vs = Vec::new();
                    tpl.vars(&mut vs);
                    for v in vs {
                        tainted[v] = true;
                    }
                }
            }
        }
        self.key_tainted = tainted;
    }

    /// Message templates this role sends, with the slot kind they go to.
    /// Used to build the attacker's synthesis shapes.
    pub fn send_templates(&self) -> impl Iterator<Item = (SlotId, &Tpl)> {
        self.steps.iter().filter_map(|s| match s {
            Step::Send { slot, tpl } => Some((*slot, tpl)),
            _ => None,
        })
    }
}

fn check_arities(tpl: &Tpl, syms: &SymbolTable) -> std::result::Result<(), String> {
    match tpl {
        Tpl::Var(_) | Tpl::Const(_) => Ok(()),
        Tpl::Pair(l, r) | Tpl::Dh(l, r) => {
            check_arities(l, syms)?;
            check_arities(r, syms)
        }
        Tpl::Apply(f, args) => {
            match syms.get(f) {
                None => return Err(format!("unknown function symbol {f}")),
                Some(sig) if sig.arity != args.len() => {
                    return Err(format!("{f} expects {} arguments", sig.arity))
                }
                Some(_) => {}
            }
            for a in args {
                check_arities(a, syms)?;
            }
            Ok(())
        }
        Tpl::Share(x) => check_arities(x, syms),
    }
}

/// Convenience builder for role programs.
pub struct RoleBuilder {
    name: String,
    slots: Vec<String>,
    vars: Vec<String>,
    params: Vec<VarId>,
    steps: Vec<Step>,
}

impl RoleBuilder {
    pub fn new(name: impl Into<String>, slots: &[&str]) -> RoleBuilder {
        RoleBuilder {
            name: name.into(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
            vars: Vec::new(),
            params: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn var(&mut self, name: &str) -> VarId {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            return i;
        }
        self.vars.push(name.to_string());
        self.vars.len() - 1
    }

    pub fn param(&mut self, name: &str) -> VarId {
        let v = self.var(name);
        if !self.params.contains(&v) {
            self.params.push(v);
        }
        v
    }

    pub fn fresh(&mut self, name: &str) -> VarId {
        let v = self.var(name);
        self.steps.push(Step::Fresh(v));
        v
    }

    pub fn send(&mut self, slot: SlotId, tpl: Tpl) {
        self.steps.push(Step::Send { slot, tpl });
    }

    pub fn recv(&mut self, slot: SlotId, pat: Pat) {
        self.steps.push(Step::Receive { slot, pat });
    }

    pub fn check(&mut self, left: Tpl, right: Tpl) {
        self.steps.push(Step::Check { left, right });
    }

    pub fn emit(&mut self, kind: EventKind, args: Vec<EvArg>) {
        self.steps.push(Step::Emit { kind, args });
    }

    pub fn build(self) -> RoleProgram {
        let mut r = RoleProgram {
            name: self.name,
            slots: self.slots,
            vars: self.vars,
            params: self.params,
            steps: self.steps,
            receive_needs: Vec::new(),
            key_tainted: Vec::new(),
        };
        r.analyze_needs();
        r
    }
}

pub fn v(id: VarId) -> Tpl {
    Tpl::Var(id)
}

pub fn cons(tag: &str) -> Tpl {
    Tpl::Const(tag.into())
}

pub fn pair(l: Tpl, r: Tpl) -> Tpl {
    Tpl::Pair(Box::new(l), Box::new(r))
}

pub fn app(f: &str, args: Vec<Tpl>) -> Tpl {
    Tpl::Apply(f.into(), args)
}

pub fn share(x: Tpl) -> Tpl {
    Tpl::Share(Box::new(x))
}

pub fn dh(a: Tpl, b: Tpl) -> Tpl {
    Tpl::Dh(Box::new(a), Box::new(b))
}

pub fn bind(v: VarId) -> Pat {
    Pat::Bind(v, Sort::Any)
}

pub fn bind_atom(v: VarId) -> Pat {
    Pat::Bind(v, Sort::Atom)
}

pub fn bind_nonce(v: VarId) -> Pat {
    Pat::Bind(v, Sort::Nonce)
}

pub fn bind_const(v: VarId) -> Pat {
    Pat::Bind(v, Sort::Const)
}

pub fn p_eq(tpl: Tpl) -> Pat {
    Pat::Eq(tpl)
}

pub fn p_const(tag: &str) -> Pat {
    Pat::Const(tag.into())
}

pub fn p_pair(l: Pat, r: Pat) -> Pat {
    Pat::Pair(Box::new(l), Box::new(r))
}

pub fn p_share(inner: Pat) -> Pat {
    Pat::Share(Box::new(inner))
}

pub fn p_apply(f: &str, pats: Vec<Pat>) -> Pat {
    Pat::Apply(f.into(), pats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::FnSig;

    fn syms() -> SymbolTable {
        SymbolTable::new(vec![FnSig::public("f1", 4), FnSig::public("g", 4)])
    }

    #[test]
    fn patterns_bind_and_match() {
        let pat = p_pair(p_const("CodeTag"), bind(0));
        let term = Term::pair(Term::cons("CodeTag"), Term::nonce("va"));
        let env = vec![None];
        let binds = pat.match_term(&term, &env).unwrap();
        assert_eq!(binds, vec![(0, Term::nonce("va"))]);
        assert!(pat.match_term(&Term::cons("CodeTag"), &env).is_none());
    }

    #[test]
    fn bound_variable_must_match_existing_value() {
        let pat = p_pair(bind(0), bind(0));
        let env = vec![None];
        assert!(pat
            .match_term(&Term::pair(Term::nonce("a"), Term::nonce("a")), &env)
            .is_some());
        assert!(pat
            .match_term(&Term::pair(Term::nonce("a"), Term::nonce("b")), &env)
            .is_none());
    }

    #[test]
    fn atom_sort_rejects_composites() {
        let pat = bind_atom(0);
        let env = vec![None];
        assert!(pat.match_term(&Term::nonce("n"), &env).is_some());
        assert!(pat.match_term(&Term::cons("T"), &env).is_some());
        assert!(pat
            .match_term(&Term::pair(Term::nonce("a"), Term::nonce("b")), &env)
            .is_none());
    }

    #[test]
    fn share_pattern_extracts_exponent() {
        let pat = p_share(bind(0));
        let env = vec![None];
        let binds = pat.match_term(&Term::share(Term::nonce("y")), &env).unwrap();
        assert_eq!(binds, vec![(0, Term::nonce("y"))]);
        assert!(pat.match_term(&Term::nonce("y"), &env).is_none());
    }

    #[test]
    fn wellformedness_rejects_use_before_bind() {
        let mut b = RoleBuilder::new("bad", &["inband"]);
        let x = b.var("x");
        b.send(0, share(v(x))); // x never bound
        let role = b.build();
        assert!(role.check_wellformed(&syms()).is_err());
    }

    #[test]
    fn wellformedness_accepts_fresh_then_use() {
        let mut b = RoleBuilder::new("ok", &["inband"]);
        let x = b.fresh("x");
        b.send(0, share(v(x)));
        let role = b.build();
        role.check_wellformed(&syms()).unwrap();
    }

    #[test]
    fn wellformedness_checks_arity() {
        let mut b = RoleBuilder::new("bad-arity", &["inband"]);
        let x = b.fresh("x");
        b.send(0, app("f1", vec![v(x)]));
        let role = b.build();
        assert!(role.check_wellformed(&syms()).is_err());
    }

    #[test]
    fn receive_needs_point_at_first_check() {
        let mut b = RoleBuilder::new("needs", &["inband"]);
        let x = b.fresh("x");
        let cb = b.var("cb");
        b.recv(0, bind(cb));
        let nb = b.var("nb");
        b.recv(0, bind_atom(nb));
        b.check(v(cb), app("f1", vec![share(v(x)), share(v(x)), v(nb), cons("Zero")]));
        let role = b.build();
        assert_eq!(role.receive_needs[1].get(&cb), Some(&3));
        assert_eq!(role.receive_needs[2].get(&nb), Some(&3));
        assert!(role.receive_needs[0].is_empty());
    }
}
