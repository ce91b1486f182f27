//! Nimble out-of-band registration: a peer device registers with an
//! authentication server, authenticated by a single OOB message that the
//! user carries from the peer's display to the server.
//!
//! The OOB message is reduced to a fresh secret and a fingerprint over
//! both key shares and that secret. The server has a strong identity (the
//! user reaches it over HTTPS) and is never compromisable in shipped
//! scenarios.

use super::{family_queries, Family, ProtocolModel};
use crate::deduce::SymbolTable;
use crate::event::EventKind;
use crate::role::{
    app, bind, bind_nonce, dh, p_pair, p_share, pair, share, v, EvArg, RoleBuilder, RoleProgram,
};
use crate::term::FnSig;
use std::collections::BTreeMap;
use std::sync::Arc;

const INBAND: usize = 0;
const OOB: usize = 1;
const SLOT_SERVER: usize = 0;
const SLOT_PEER: usize = 1;

fn peer() -> RoleProgram {
    let mut b = RoleBuilder::new("peer", &["inband", "phys"]);
    let p = b.fresh("p");
    b.send(INBAND, share(v(p)));
    let es = b.var("es");
    b.recv(INBAND, p_share(bind(es)));
    let noob = b.fresh("noob");
    let mo = pair(
        v(noob),
        app("hoob", vec![share(v(p)), share(v(es)), v(noob)]),
    );
    b.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(mo.clone())],
    );
    b.send(OOB, mo);
    b.emit(
        EventKind::PeerComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(p), v(es)), v(noob)])),
        ],
    );
    b.build()
}

fn server() -> RoleProgram {
    let mut b = RoleBuilder::new("server", &["inband", "oob"]);
    let s = b.fresh("s");
    let ep = b.var("ep");
    b.recv(INBAND, p_share(bind(ep)));
    b.send(INBAND, share(v(s)));
    let noobv = b.var("noob");
    let hv = b.var("fingerprint");
    b.recv(OOB, p_pair(bind_nonce(noobv), bind(hv)));
    b.check(
        v(hv),
        app("hoob", vec![share(v(ep)), share(v(s)), v(noobv)]),
    );
    b.emit(
        EventKind::ServerComplete,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(app("f2", vec![dh(v(s), v(ep)), v(noobv)])),
        ],
    );
    b.build()
}

fn user() -> RoleProgram {
    let mut b = RoleBuilder::new("user", &["oob-server", "phys-peer"]);
    b.emit(
        EventKind::HttpsAccess,
        vec![EvArg::User, EvArg::Slot(SLOT_SERVER)],
    );
    b.emit(
        EventKind::IntendToPair,
        vec![EvArg::User, EvArg::Slot(SLOT_SERVER), EvArg::Slot(SLOT_PEER)],
    );
    let mo = b.var("mo");
    b.recv(SLOT_PEER, bind(mo));
    b.send(SLOT_SERVER, v(mo));
    b.build()
}

pub fn model() -> ProtocolModel {
    let list = vec![peer(), server(), user()];
    ProtocolModel {
        name: "eap-noob".into(),
        family: Family::Noob,
        description: "out-of-band device registration against an authentication server".into(),
        symbols: SymbolTable::new(vec![FnSig::public("hoob", 3), FnSig::public("f2", 2)]),
        constants: vec![],
        roles: list
            .into_iter()
            .map(|r| (r.name.clone(), Arc::new(r)))
            .collect::<BTreeMap<_, _>>(),
        device_roles: vec!["peer".into()],
        queries: family_queries(Family::Noob),
    }
}
