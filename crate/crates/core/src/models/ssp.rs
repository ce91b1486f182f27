//! Bluetooth-style secure simple pairing models.
//!
//! Four variants share a phase-1 ECDH exchange over the in-band channel:
//!
//! * `ssp-nc` — numeric comparison: commitment, nonce exchange, six-digit
//!   verification code compared by the user on two displays.
//! * `ssp-oob` — the authentication step is a one-directional out-of-band
//!   transfer carried by the user from the non-initiator to the initiator.
//! * `ssp-secret-code` — numeric comparison where the code is computed
//!   from the ECDH shared secret instead of the public inputs.
//! * `ssp-identity-bound` — devices carry communicable identifier
//!   constants mixed into key derivation and shown next to the code; the
//!   user checks them against expected values from an asset database
//!   (`-lax` ships a user who ignores the identifiers).
//!
//! Later pairing phases past link-key derivation are collapsed into the
//! `f2` computation; they do not interact with code confirmation.

use super::{family_queries, Family, ProtocolModel};
use crate::deduce::SymbolTable;
use crate::event::EventKind;
use crate::role::{
    app, bind, bind_const, bind_nonce, cons, dh, p_const, p_eq, p_pair, p_share, pair, share, v,
    EvArg, RoleBuilder, RoleProgram,
};
use crate::term::FnSig;
use std::collections::BTreeMap;
use std::sync::Arc;

pub const INBAND: usize = 0;
pub const PHYS: usize = 1;
const SLOT_INIT: usize = 0;
const SLOT_RESP: usize = 1;

fn symbols(code_from_secret: bool, identity_bound: bool) -> SymbolTable {
    let mut sigs = vec![FnSig::public("f1", 4)];
    sigs.push(if code_from_secret {
        FnSig::public("g", 3)
    } else {
        FnSig::public("g", 4)
    });
    sigs.push(if identity_bound {
        FnSig::public("f2", 5)
    } else {
        FnSig::public("f2", 3)
    });
    SymbolTable::new(sigs)
}

/// Initiator device: phase-1 share exchange, commitment check, code
/// display, confirmation wait, link-key derivation.
fn initiator(code_from_secret: bool) -> RoleProgram {
    let mut b = RoleBuilder::new("initiator", &["inband", "phys"]);
    let x = b.fresh("x");
    b.send(INBAND, share(v(x)));
    let eb = b.var("eb");
    b.recv(INBAND, p_share(bind(eb)));
    let cb = b.var("cb");
    b.recv(INBAND, bind(cb));
    let na = b.fresh("na");
    b.send(INBAND, v(na));
    let nb = b.var("nb");
    b.recv(INBAND, bind_nonce(nb));
    b.check(
        v(cb),
        app("f1", vec![share(v(eb)), share(v(x)), v(nb), cons("Zero")]),
    );
    let code = if code_from_secret {
        app("g", vec![dh(v(x), v(eb)), v(na), v(nb)])
    } else {
        app("g", vec![share(v(x)), share(v(eb)), v(na), v(nb)])
    };
    b.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(code.clone())],
    );
    b.send(PHYS, pair(cons("CodeTag"), code.clone()));
    b.recv(PHYS, p_pair(p_const("OkTag"), p_eq(code)));
    b.emit(
        EventKind::InitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(x), v(eb)), v(na), v(nb)])),
        ],
    );
    b.build()
}

/// Non-initiator device. Per the message flow it commits to its nonce
/// before the initiator reveals Na and only discloses Nb afterwards.
fn non_initiator(code_from_secret: bool) -> RoleProgram {
    let mut b = RoleBuilder::new("non-initiator", &["inband", "phys"]);
    let ea = b.var("ea");
    b.recv(INBAND, p_share(bind(ea)));
    let y = b.fresh("y");
    b.send(INBAND, share(v(y)));
    let nb = b.fresh("nb");
    b.send(
        INBAND,
        app("f1", vec![share(v(y)), share(v(ea)), v(nb), cons("Zero")]),
    );
    let na = b.var("na");
    b.recv(INBAND, bind_nonce(na));
    b.send(INBAND, v(nb));
    let code = if code_from_secret {
        app("g", vec![dh(v(y), v(ea)), v(na), v(nb)])
    } else {
        app("g", vec![share(v(ea)), share(v(y)), v(na), v(nb)])
    };
    b.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(code.clone())],
    );
    b.send(PHYS, pair(cons("CodeTag"), code.clone()));
    b.recv(PHYS, p_pair(p_const("OkTag"), p_eq(code)));
    b.emit(
        EventKind::NoninitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(y), v(ea)), v(na), v(nb)])),
        ],
    );
    b.build()
}

/// The ceremony: declare access and intent, read both codes, compare, and
/// confirm to both devices.
fn comparison_user() -> RoleProgram {
    let mut b = RoleBuilder::new("user", &["phys-initiator", "phys-responder"]);
    b.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_INIT)]);
    b.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_RESP)]);
    b.emit(
        EventKind::IntendToPair,
        vec![EvArg::User, EvArg::Slot(SLOT_INIT), EvArg::Slot(SLOT_RESP)],
    );
    let va = b.var("va");
    b.recv(SLOT_INIT, p_pair(p_const("CodeTag"), bind(va)));
    let vb = b.var("vb");
    b.recv(SLOT_RESP, p_pair(p_const("CodeTag"), bind(vb)));
    b.check(v(va), v(vb));
    b.emit(
        EventKind::CodeConfirmed,
        vec![EvArg::Slot(SLOT_INIT), EvArg::Tpl(v(va))],
    );
    b.emit(
        EventKind::CodeConfirmed,
        vec![EvArg::Slot(SLOT_RESP), EvArg::Tpl(v(vb))],
    );
    b.send(SLOT_INIT, pair(cons("OkTag"), v(va)));
    b.send(SLOT_RESP, pair(cons("OkTag"), v(vb)));
    b.build()
}

fn roles(list: Vec<RoleProgram>) -> BTreeMap<String, Arc<RoleProgram>> {
    list.into_iter()
        .map(|r| (r.name.clone(), Arc::new(r)))
        .collect()
}

pub fn numeric_comparison() -> ProtocolModel {
    ProtocolModel {
        name: "ssp-nc".into(),
        family: Family::Ssp,
        description: "secure simple pairing, numeric comparison".into(),
        symbols: symbols(false, false),
        constants: vec!["CodeTag".into(), "OkTag".into(), "Zero".into()],
        roles: roles(vec![initiator(false), non_initiator(false), comparison_user()]),
        device_roles: vec!["initiator".into(), "non-initiator".into()],
        queries: family_queries(Family::Ssp),
    }
}

pub fn secret_code() -> ProtocolModel {
    ProtocolModel {
        name: "ssp-secret-code".into(),
        family: Family::Ssp,
        description: "numeric comparison with codes derived from the shared secret".into(),
        symbols: symbols(true, false),
        constants: vec!["CodeTag".into(), "OkTag".into(), "Zero".into()],
        roles: roles(vec![initiator(true), non_initiator(true), comparison_user()]),
        device_roles: vec!["initiator".into(), "non-initiator".into()],
        queries: family_queries(Family::Ssp),
    }
}

/// Out-of-band mode: the non-initiator commits to its key share with a
/// fresh secret, the user carries the commitment to the initiator, and the
/// initiator checks it against the in-band share.
pub fn oob() -> ProtocolModel {
    let syms = SymbolTable::new(vec![FnSig::public("f2", 3), FnSig::public("hoob", 2)]);

    let mut bi = RoleBuilder::new("initiator", &["inband", "phys"]);
    let x = bi.fresh("x");
    bi.send(INBAND, share(v(x)));
    let eb = bi.var("eb");
    bi.recv(INBAND, p_share(bind(eb)));
    let rv = bi.var("rv");
    let hv = bi.var("hv");
    bi.recv(PHYS, p_pair(bind_nonce(rv), bind(hv)));
    bi.check(v(hv), app("hoob", vec![share(v(eb)), v(rv)]));
    bi.emit(
        EventKind::InitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(x), v(eb)), share(v(x)), share(v(eb))])),
        ],
    );
    let init = bi.build();

    let mut bn = RoleBuilder::new("non-initiator", &["inband", "phys"]);
    let ea = bn.var("ea");
    bn.recv(INBAND, p_share(bind(ea)));
    let y = bn.fresh("y");
    bn.send(INBAND, share(v(y)));
    let r = bn.fresh("r");
    let mo = pair(v(r), app("hoob", vec![share(v(y)), v(r)]));
    bn.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(mo.clone())],
    );
    bn.send(PHYS, mo);
    bn.emit(
        EventKind::NoninitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(y), v(ea)), share(v(ea)), share(v(y))])),
        ],
    );
    let noninit = bn.build();

    let mut bu = RoleBuilder::new("user", &["phys-initiator", "phys-responder"]);
    bu.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_INIT)]);
    bu.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_RESP)]);
    bu.emit(
        EventKind::IntendToPair,
        vec![EvArg::User, EvArg::Slot(SLOT_INIT), EvArg::Slot(SLOT_RESP)],
    );
    let mo = bu.var("mo");
    bu.recv(SLOT_RESP, bind(mo));
    bu.send(SLOT_INIT, v(mo));
    let user = bu.build();

    ProtocolModel {
        name: "ssp-oob".into(),
        family: Family::Ssp,
        description: "secure simple pairing, out-of-band mode".into(),
        symbols: syms,
        constants: vec![],
        roles: roles(vec![init, noninit, user]),
        device_roles: vec!["initiator".into(), "non-initiator".into()],
        queries: family_queries(Family::Ssp),
    }
}

/// Numeric comparison with communicable device identifiers bound into the
/// key derivation and displayed beside the code. With `checking` users the
/// ceremony aborts on an unexpected peer identifier.
pub fn identity_bound(checking: bool) -> ProtocolModel {
    let syms = symbols(false, true);

    let mut bi = RoleBuilder::new("initiator", &["inband", "phys"]);
    let ida = bi.param("id");
    let x = bi.fresh("x");
    bi.send(INBAND, pair(share(v(x)), v(ida)));
    let eb = bi.var("eb");
    let idb = bi.var("peer-id");
    bi.recv(INBAND, p_pair(p_share(bind(eb)), bind_const(idb)));
    let cb = bi.var("cb");
    bi.recv(INBAND, bind(cb));
    let na = bi.fresh("na");
    bi.send(INBAND, v(na));
    let nb = bi.var("nb");
    bi.recv(INBAND, bind_nonce(nb));
    bi.check(
        v(cb),
        app("f1", vec![share(v(eb)), share(v(x)), v(nb), cons("Zero")]),
    );
    let code = app("g", vec![share(v(x)), share(v(eb)), v(na), v(nb)]);
    bi.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(code.clone())],
    );
    bi.send(PHYS, pair(cons("CodeTag"), pair(code.clone(), v(idb))));
    bi.recv(PHYS, p_pair(p_const("OkTag"), p_eq(code)));
    bi.emit(
        EventKind::InitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app(
                "f2",
                vec![dh(v(x), v(eb)), v(na), v(nb), v(ida), v(idb)],
            )),
        ],
    );
    let init = bi.build();

    let mut bn = RoleBuilder::new("non-initiator", &["inband", "phys"]);
    let idb_own = bn.param("id");
    let ea = bn.var("ea");
    let ida_r = bn.var("peer-id");
    bn.recv(INBAND, p_pair(p_share(bind(ea)), bind_const(ida_r)));
    let y = bn.fresh("y");
    bn.send(INBAND, pair(share(v(y)), v(idb_own)));
    let nb = bn.fresh("nb");
    bn.send(
        INBAND,
        app("f1", vec![share(v(y)), share(v(ea)), v(nb), cons("Zero")]),
    );
    let na = bn.var("na");
    bn.recv(INBAND, bind_nonce(na));
    bn.send(INBAND, v(nb));
    let code = app("g", vec![share(v(ea)), share(v(y)), v(na), v(nb)]);
    bn.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(code.clone())],
    );
    bn.send(PHYS, pair(cons("CodeTag"), pair(code.clone(), v(ida_r))));
    bn.recv(PHYS, p_pair(p_const("OkTag"), p_eq(code)));
    bn.emit(
        EventKind::NoninitiatorComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app(
                "f2",
                vec![dh(v(y), v(ea)), v(na), v(nb), v(ida_r), v(idb_own)],
            )),
        ],
    );
    let noninit = bn.build();

    let mut bu = RoleBuilder::new("user", &["phys-initiator", "phys-responder"]);
    let exp_init = bu.param("expected-initiator-id");
    let exp_resp = bu.param("expected-responder-id");
    bu.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_INIT)]);
    bu.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_RESP)]);
    bu.emit(
        EventKind::IntendToPair,
        vec![EvArg::User, EvArg::Slot(SLOT_INIT), EvArg::Slot(SLOT_RESP)],
    );
    let va = bu.var("va");
    let pid_a = bu.var("shown-id-a");
    bu.recv(
        SLOT_INIT,
        p_pair(p_const("CodeTag"), p_pair(bind(va), bind_const(pid_a))),
    );
    let vb = bu.var("vb");
    let pid_b = bu.var("shown-id-b");
    bu.recv(
        SLOT_RESP,
        p_pair(p_const("CodeTag"), p_pair(bind(vb), bind_const(pid_b))),
    );
    bu.check(v(va), v(vb));
    if checking {
        // the initiator shows its peer's identifier, so the expected value
        // on the initiator display is the responder's identifier
        bu.check(v(pid_a), v(exp_resp));
        bu.check(v(pid_b), v(exp_init));
    }
    bu.emit(
        EventKind::CodeConfirmed,
        vec![EvArg::Slot(SLOT_INIT), EvArg::Tpl(v(va))],
    );
    bu.emit(
        EventKind::CodeConfirmed,
        vec![EvArg::Slot(SLOT_RESP), EvArg::Tpl(v(vb))],
    );
    bu.send(SLOT_INIT, pair(cons("OkTag"), v(va)));
    bu.send(SLOT_RESP, pair(cons("OkTag"), v(vb)));
    let user = bu.build();

    ProtocolModel {
        name: if checking {
            "ssp-identity-bound".into()
        } else {
            "ssp-identity-bound-lax".into()
        },
        family: Family::Ssp,
        description: if checking {
            "pairing with asset-tracked identifiers checked by the user".into()
        } else {
            "identifier-bound pairing with a user who ignores the identifiers".into()
        },
        symbols: syms,
        constants: vec!["CodeTag".into(), "OkTag".into(), "Zero".into()],
        roles: roles(vec![init, noninit, user]),
        device_roles: vec!["initiator".into(), "non-initiator".into()],
        queries: family_queries(Family::Ssp),
    }
}
