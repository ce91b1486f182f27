//! Symbolic message terms and their Diffie-Hellman equational theory.
//!
//! Terms are the values exchanged on channels and recorded in events. The
//! only equation in the theory is DH commutativity: `DhKey(a, b)` and
//! `DhKey(b, a)` denote the same key and share a normal form. Everything
//! else (pairing, free function application, key shares) is syntactic.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A symbolic message value.
///
/// `Nonce` covers every fresh atom a role creates, including DH exponents.
/// `PubShare(x)` stands for the public key share of exponent `x` (gˣ) and
/// `DhKey(a, b)` for the shared secret gᵃᵇ, kept in canonical argument
/// order so that commuted keys compare equal. `Chan` is a channel handle:
/// it names a device in events and is never sendable (term templates have
/// no way to embed one in a message).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "nonce")]
    Nonce(String),
    #[serde(rename = "const")]
    Const(String),
    #[serde(rename = "pair")]
    Pair(Box<Term>, Box<Term>),
    #[serde(rename = "apply")]
    Apply(String, Vec<Term>),
    #[serde(rename = "share")]
    PubShare(Box<Term>),
    #[serde(rename = "dhkey")]
    DhKey(Box<Term>, Box<Term>),
    #[serde(rename = "chan")]
    Chan(String),
}

impl Term {
    pub fn nonce(name: impl Into<String>) -> Term {
        Term::Nonce(name.into())
    }

    pub fn cons(tag: impl Into<String>) -> Term {
        Term::Const(tag.into())
    }

    pub fn pair(left: Term, right: Term) -> Term {
        Term::Pair(Box::new(left), Box::new(right))
    }

    pub fn apply(f: impl Into<String>, args: Vec<Term>) -> Term {
        Term::Apply(f.into(), args)
    }

    pub fn share(exponent: Term) -> Term {
        Term::PubShare(Box::new(exponent))
    }

    /// DH key of two exponents, in canonical order.
    pub fn dh(a: Term, b: Term) -> Term {
        if a <= b {
            Term::DhKey(Box::new(a), Box::new(b))
        } else {
            Term::DhKey(Box::new(b), Box::new(a))
        }
    }

    pub fn chan(name: impl Into<String>) -> Term {
        Term::Chan(name.into())
    }

    /// Rewrites the term into its normal form: children normalized and
    /// `DhKey` arguments in canonical order. Structural equality of normal
    /// forms is the term-equality relation used everywhere else.
    pub fn normalize(&self) -> Term {
        match self {
            Term::Nonce(_) | Term::Const(_) | Term::Chan(_) => self.clone(),
            Term::Pair(l, r) => Term::pair(l.normalize(), r.normalize()),
            Term::Apply(f, args) => {
                Term::Apply(f.clone(), args.iter().map(Term::normalize).collect())
            }
            Term::PubShare(x) => Term::share(x.normalize()),
            Term::DhKey(a, b) => Term::dh(a.normalize(), b.normalize()),
        }
    }

    /// True if the term is already in normal form.
    pub fn is_normal(&self) -> bool {
        *self == self.normalize()
    }

    /// All subterms, including the term itself.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        self.walk(&mut |t| out.push(t));
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        match self {
            Term::Nonce(_) | Term::Const(_) | Term::Chan(_) => {}
            Term::Pair(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Term::Apply(_, args) => {
                for a in args {
                    a.walk(f);
                }
            }
            Term::PubShare(x) => x.walk(f),
            Term::DhKey(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    /// The set of fresh names (nonces and channel handles) occurring in the
    /// term. Normalization preserves this set.
    pub fn fresh_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |t| match t {
            Term::Nonce(n) | Term::Chan(n) => out.push(n.as_str()),
            _ => {}
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// True for atoms: nonces and public constants.
    pub fn is_atom(&self) -> bool {
        matches!(self, Term::Nonce(_) | Term::Const(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Nonce(n) => write!(f, "{n}"),
            Term::Const(c) => write!(f, "'{c}"),
            Term::Pair(l, r) => write!(f, "({l}, {r})"),
            Term::Apply(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::PubShare(x) => write!(f, "pub({x})"),
            Term::DhKey(a, b) => write!(f, "dh({a}, {b})"),
            Term::Chan(c) => write!(f, "@{c}"),
        }
    }
}

/// A function symbol known to a protocol model.
///
/// `public` controls whether the Dolev-Yao attacker may apply the symbol
/// to terms it knows. All the pairing-protocol symbols (commitments,
/// verification codes, key derivation, fingerprints) are public one-way
/// functions; only signing-key lookup is private.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnSig {
    pub name: String,
    pub arity: usize,
    pub public: bool,
}

impl FnSig {
    pub fn public(name: impl Into<String>, arity: usize) -> FnSig {
        FnSig {
            name: name.into(),
            arity,
            public: true,
        }
    }

    pub fn private(name: impl Into<String>, arity: usize) -> FnSig {
        FnSig {
            name: name.into(),
            arity,
            public: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Term {
        Term::nonce("x")
    }

    fn y() -> Term {
        Term::nonce("y")
    }

    #[test]
    fn dh_key_commutes_to_shared_normal_form() {
        let k1 = Term::DhKey(Box::new(x()), Box::new(y())).normalize();
        let k2 = Term::DhKey(Box::new(y()), Box::new(x())).normalize();
        assert_eq!(k1, k2);
    }

    #[test]
    fn nonce_is_already_normal() {
        assert_eq!(x().normalize(), x());
        assert!(x().is_normal());
    }

    #[test]
    fn normalize_is_idempotent() {
        let t = Term::apply(
            "f2",
            vec![
                Term::DhKey(Box::new(y()), Box::new(x())),
                Term::pair(Term::cons("OkTag"), Term::share(y())),
            ],
        );
        let n1 = t.normalize();
        let n2 = n1.normalize();
        assert_eq!(n1, n2);
    }

    #[test]
    fn normalize_preserves_fresh_name_set() {
        let t = Term::pair(
            Term::DhKey(Box::new(y()), Box::new(x())),
            Term::chan("A"),
        );
        assert_eq!(t.fresh_names(), t.normalize().fresh_names());
    }

    /// Brute-force oracle: of all argument permutations of a 4-ary `g`
    /// application, only DhKey argument swaps may be identified by
    /// normalization. `g` itself is not commutative.
    #[test]
    fn apply_argument_order_is_significant() {
        let args = vec![Term::share(x()), Term::share(y()), Term::nonce("na"), Term::nonce("nb")];
        let base = Term::apply("g", args.clone()).normalize();
        let mut identified = 0;
        let mut distinct = 0;
        // enumerate all 24 permutations of the argument list
        let idx = [0usize, 1, 2, 3];
        let mut perms = Vec::new();
        fn permute(rest: Vec<usize>, acc: Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest.is_empty() {
                out.push(acc);
                return;
            }
            for (i, &v) in rest.iter().enumerate() {
                let mut r = rest.clone();
                r.remove(i);
                let mut a = acc.clone();
                a.push(v);
                permute(r, a, out);
            }
        }
        permute(idx.to_vec(), Vec::new(), &mut perms);
        assert_eq!(perms.len(), 24);
        for p in perms {
            let permuted = Term::apply("g", p.iter().map(|&i| args[i].clone()).collect());
            if permuted.normalize() == base {
                identified += 1;
            } else {
                distinct += 1;
            }
        }
        // only the identity permutation maps back to the base term
        assert_eq!(identified, 1);
        assert_eq!(distinct, 23);

        // whereas the DhKey constructor does identify the swap
        assert_eq!(Term::dh(x(), y()), Term::dh(y(), x()));
    }

    #[test]
    fn json_round_trip_is_exact_on_normal_forms() {
        let t = Term::apply(
            "f1",
            vec![
                Term::share(y()),
                Term::share(x()),
                Term::nonce("nb"),
                Term::cons("Zero"),
            ],
        )
        .normalize();
        let js = serde_json::to_string(&t).unwrap();
        let back: Term = serde_json::from_str(&js).unwrap();
        assert_eq!(t, back);
    }
}
