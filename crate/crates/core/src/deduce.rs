//! Dolev-Yao deduction: what an attacker can derive from a knowledge set.
//!
//! The attacker can spoof, intercept, and modify messages in arbitrary
//! ways, except when it lacks the necessary cryptographic material. That
//! limit is realized here as a closure over a small rule set:
//!
//! * pairing and projection,
//! * application of any public function symbol,
//! * `PubShare(x)` from `x`,
//! * `DhKey(x, y)` from one exponent plus the other side's share.
//!
//! Projection is applied eagerly when facts enter the basis (pairs carry no
//! secrets of their own in this theory), so derivation itself is a pure
//! composition search bounded by a depth.

use crate::term::{FnSig, Term};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// The function symbols a model declares, with arity and publicness.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTable {
    map: BTreeMap<String, FnSig>,
}

impl SymbolTable {
    pub fn new(sigs: impl IntoIterator<Item = FnSig>) -> SymbolTable {
        let mut map = BTreeMap::new();
        for s in sigs {
            map.insert(s.name.clone(), s);
        }
        SymbolTable { map }
    }

    pub fn get(&self, name: &str) -> Option<&FnSig> {
        self.map.get(name)
    }

    pub fn is_public(&self, name: &str) -> bool {
        self.map.get(name).map(|s| s.public).unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FnSig> {
        self.map.values()
    }
}

/// A set of ground facts known to the attacker, kept closed under
/// projection: inserting a pair also inserts both components.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeSet {
    basis: BTreeSet<Term>,
}

impl KnowledgeSet {
    pub fn new() -> KnowledgeSet {
        KnowledgeSet::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> KnowledgeSet {
        let mut k = KnowledgeSet::new();
        for t in terms {
            k.insert(t);
        }
        k
    }

    /// Adds a fact, normalized, together with its projections.
    pub fn insert(&mut self, t: Term) {
        let t = t.normalize();
        if let Term::Pair(l, r) = &t {
            self.insert((**l).clone());
            self.insert((**r).clone());
        }
        self.basis.insert(t);
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.basis.contains(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.basis.iter()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn is_subset(&self, other: &KnowledgeSet) -> bool {
        self.basis.is_subset(&other.basis)
    }

    /// A stable fingerprint of the basis, usable as a closure-cache key.
    pub fn fingerprint(&self) -> u64 {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let mut h = DefaultHasher::new();
        self.basis.hash(&mut h);
        h.finish()
    }

    /// True iff `target` is in the deduction closure of the basis within
    /// `depth` composition-rule applications. Monotone in both the
    /// knowledge set and the depth.
    pub fn derives(&self, syms: &SymbolTable, target: &Term, depth: u32) -> bool {
        let target = target.normalize();
        let mut memo = HashMap::new();
        self.derives_memo(syms, &target, depth, &mut memo)
    }

    fn derives_memo(
        &self,
        syms: &SymbolTable,
        target: &Term,
        depth: u32,
        memo: &mut HashMap<(Term, u32), bool>,
    ) -> bool {
        if self.basis.contains(target) {
            return true;
        }
        // public constants are free for the taking
        if matches!(target, Term::Const(_)) {
            return true;
        }
        if depth == 0 {
            return false;
        }
        if let Some(&hit) = memo.get(&(target.clone(), depth)) {
            return hit;
        }
        let d = depth - 1;
        let out = match target {
            Term::Nonce(_) | Term::Chan(_) | Term::Const(_) => false,
            Term::Pair(l, r) => {
                self.derives_memo(syms, l, d, memo) && self.derives_memo(syms, r, d, memo)
            }
            Term::Apply(f, args) => {
                syms.is_public(f) && args.iter().all(|a| self.derives_memo(syms, a, d, memo))
            }
            Term::PubShare(x) => self.derives_memo(syms, x, d, memo),
            Term::DhKey(a, b) => {
                let share_a = Term::share((**a).clone());
                let share_b = Term::share((**b).clone());
                (self.derives_memo(syms, a, d, memo) && self.derives_memo(syms, &share_b, d, memo))
                    || (self.derives_memo(syms, b, d, memo)
                        && self.derives_memo(syms, &share_a, d, memo))
            }
        };
        memo.insert((target.clone(), depth), out);
        out
    }

    /// Every member of `vocabulary` derivable from the basis within
    /// `depth`. Restricting the closure to a finite vocabulary keeps the
    /// search space finite.
    pub fn saturate(
        &self,
        syms: &SymbolTable,
        vocabulary: &BTreeSet<Term>,
        depth: u32,
    ) -> BTreeSet<Term> {
        vocabulary
            .iter()
            .filter(|t| self.derives(syms, t, depth))
            .cloned()
            .collect()
    }
}

/// A transparent memo for saturation results, keyed by basis fingerprint
/// and depth. Results are identical with or without it.
#[derive(Debug, Default)]
pub struct ClosureCache {
    map: std::sync::Mutex<HashMap<(u64, u64, u32), std::sync::Arc<BTreeSet<Term>>>>,
}

impl ClosureCache {
    pub fn new() -> ClosureCache {
        ClosureCache::default()
    }

    pub fn saturate(
        &self,
        k: &KnowledgeSet,
        syms: &SymbolTable,
        vocabulary: &BTreeSet<Term>,
        vocab_fp: u64,
        depth: u32,
    ) -> std::sync::Arc<BTreeSet<Term>> {
        let key = (k.fingerprint(), vocab_fp, depth);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let fresh = std::sync::Arc::new(k.saturate(syms, vocabulary, depth));
        self.map.lock().unwrap().insert(key, fresh.clone());
        fresh
    }
}

/// Default deduction depth. The deepest honest derivation in any shipped
/// model (a link key from raw shares) takes four rule applications; six
/// leaves headroom and is configurable per scenario.
pub const DEFAULT_DEDUCTION_DEPTH: u32 = 6;

#[cfg(test)]
mod tests {
    use super::*;

    fn syms() -> SymbolTable {
        SymbolTable::new(vec![
            FnSig::public("f1", 4),
            FnSig::public("g", 4),
            FnSig::public("f2", 3),
            FnSig::public("hash", 1),
            FnSig::public("hoob", 3),
            FnSig::private("sk", 1),
        ])
    }

    fn x() -> Term {
        Term::nonce("x")
    }

    fn y() -> Term {
        Term::nonce("y")
    }

    #[test]
    fn dh_key_from_exponent_and_share() {
        let k = KnowledgeSet::from_terms(vec![x(), Term::share(y())]);
        assert!(k.derives(&syms(), &Term::dh(x(), y()), 6));
        assert!(k.derives(&syms(), &Term::dh(y(), x()), 6));
    }

    #[test]
    fn dh_key_not_from_two_shares() {
        // passive observer of both public shares does not learn the key
        let k = KnowledgeSet::from_terms(vec![Term::share(x()), Term::share(y())]);
        assert!(!k.derives(&syms(), &Term::dh(x(), y()), 8));
    }

    #[test]
    fn verification_code_from_sniffed_inputs() {
        // everything needed for the numeric-comparison code travels in band
        let k = KnowledgeSet::from_terms(vec![
            Term::share(x()),
            Term::share(y()),
            Term::nonce("na"),
            Term::nonce("nb"),
        ]);
        let code = Term::apply(
            "g",
            vec![Term::share(x()), Term::share(y()), Term::nonce("na"), Term::nonce("nb")],
        );
        assert!(k.derives(&syms(), &code, 6));
    }

    #[test]
    fn empty_knowledge_derives_only_constants() {
        let k = KnowledgeSet::new();
        assert!(k.derives(&syms(), &Term::cons("OkTag"), 0));
        assert!(!k.derives(&syms(), &x(), 10));
        assert!(!k.derives(&syms(), &Term::share(x()), 10));
    }

    #[test]
    fn projection_happens_on_insert() {
        let k = KnowledgeSet::from_terms(vec![Term::pair(x(), Term::pair(y(), Term::nonce("z")))]);
        assert!(k.contains(&x()));
        assert!(k.contains(&y()));
        assert!(k.contains(&Term::nonce("z")));
    }

    #[test]
    fn private_symbols_cannot_be_applied() {
        let k = KnowledgeSet::from_terms(vec![Term::cons("B")]);
        assert!(!k.derives(&syms(), &Term::apply("sk", vec![Term::cons("B")]), 8));
        // but a leaked signing key is usable as a fact
        let k2 = KnowledgeSet::from_terms(vec![Term::apply("sk", vec![Term::cons("B")])]);
        assert!(k2.derives(&syms(), &Term::apply("sk", vec![Term::cons("B")]), 0));
    }

    #[test]
    fn fresh_nonce_underivable_at_any_depth() {
        let k = KnowledgeSet::from_terms(vec![
            Term::share(x()),
            Term::apply("hash", vec![Term::share(y())]),
        ]);
        assert!(!k.derives(&syms(), &Term::nonce("secret"), 32));
    }

    #[test]
    fn derivation_is_monotone_in_depth_and_knowledge() {
        let target = Term::apply("hash", vec![Term::pair(x(), y())]);
        let small = KnowledgeSet::from_terms(vec![x(), y()]);
        let mut big = small.clone();
        big.insert(Term::nonce("extra"));
        for d in 0..8 {
            if small.derives(&syms(), &target, d) {
                assert!(small.derives(&syms(), &target, d + 1));
                assert!(big.derives(&syms(), &target, d));
            }
        }
        assert!(small.derives(&syms(), &target, 6));
    }

    #[test]
    fn saturate_matches_direct_filtering() {
        let k = KnowledgeSet::from_terms(vec![Term::pair(x(), Term::share(y()))]);
        let vocab: BTreeSet<Term> = vec![
            x(),
            y(),
            Term::share(y()),
            Term::dh(x(), y()),
            Term::cons("OkTag"),
            Term::nonce("other"),
        ]
        .into_iter()
        .collect();
        let sat = k.saturate(&syms(), &vocab, 6);
        assert!(sat.contains(&x()));
        assert!(sat.contains(&Term::share(y())));
        assert!(sat.contains(&Term::dh(x(), y())));
        assert!(sat.contains(&Term::cons("OkTag")));
        assert!(!sat.contains(&y()));
        assert!(!sat.contains(&Term::nonce("other")));
    }

    #[test]
    fn closure_cache_is_transparent() {
        let k = KnowledgeSet::from_terms(vec![x(), Term::share(y())]);
        let vocab: BTreeSet<Term> = vec![Term::dh(x(), y()), y()].into_iter().collect();
        let cache = ClosureCache::new();
        let a = cache.saturate(&k, &syms(), &vocab, 1, 6);
        let b = cache.saturate(&k, &syms(), &vocab, 1, 6);
        assert_eq!(*a, k.saturate(&syms(), &vocab, 6));
        assert_eq!(a, b);
    }
}
