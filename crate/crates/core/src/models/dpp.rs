//! Simplified network-provisioning model: an enrollee device outputs its
//! public key and metadata over an OOB channel (a QR code in practice),
//! the user carries the payload to a configurator, and the configurator
//! provisions the enrollee in band, keyed to the received public key.

use super::{family_queries, Family, ProtocolModel};
use crate::deduce::SymbolTable;
use crate::event::EventKind;
use crate::role::{
    app, bind, cons, dh, p_const, p_pair, p_share, pair, share, v, EvArg, RoleBuilder,
    RoleProgram,
};
use crate::term::FnSig;
use std::collections::BTreeMap;
use std::sync::Arc;

const INBAND: usize = 0;
const OOB: usize = 1;
const SLOT_CONF: usize = 0;
const SLOT_ENROLLEE: usize = 1;

fn enrollee() -> RoleProgram {
    let mut b = RoleBuilder::new("enrollee", &["inband", "phys"]);
    let e = b.fresh("e");
    let payload = pair(share(v(e)), cons("MetaTag"));
    b.emit(
        EventKind::CodeDisplayed,
        vec![EvArg::SelfChan, EvArg::Tpl(payload.clone())],
    );
    b.send(OOB, payload);
    let cc = b.var("cc");
    let m = b.var("m");
    b.recv(INBAND, p_pair(p_share(bind(cc)), bind(m)));
    b.check(v(m), app("mac", vec![dh(v(e), v(cc)), cons("ProvTag")]));
    b.emit(
        EventKind::NoninitiatorComplete,
        vec![EvArg::SelfChan, EvArg::Tpl(dh(v(e), v(cc)))],
    );
    b.build()
}

fn configurator() -> RoleProgram {
    let mut b = RoleBuilder::new("configurator", &["inband", "oob"]);
    let ee = b.var("ee");
    b.recv(OOB, p_pair(p_share(bind(ee)), p_const("MetaTag")));
    let c = b.fresh("c");
    b.send(
        INBAND,
        pair(
            share(v(c)),
            app("mac", vec![dh(v(c), v(ee)), cons("ProvTag")]),
        ),
    );
    b.emit(
        EventKind::InitiatorComplete,
        vec![EvArg::SelfChan, EvArg::Tpl(dh(v(c), v(ee)))],
    );
    b.build()
}

fn user() -> RoleProgram {
    let mut b = RoleBuilder::new("user", &["oob-configurator", "phys-enrollee"]);
    b.emit(EventKind::HasAccess, vec![EvArg::User, EvArg::Slot(SLOT_CONF)]);
    b.emit(
        EventKind::HasAccess,
        vec![EvArg::User, EvArg::Slot(SLOT_ENROLLEE)],
    );
    b.emit(
        EventKind::IntendToPair,
        vec![EvArg::User, EvArg::Slot(SLOT_CONF), EvArg::Slot(SLOT_ENROLLEE)],
    );
    let payload = b.var("payload");
    b.recv(SLOT_ENROLLEE, bind(payload));
    b.send(SLOT_CONF, v(payload));
    b.build()
}

pub fn model() -> ProtocolModel {
    let list = vec![configurator(), enrollee(), user()];
    ProtocolModel {
        name: "dpp".into(),
        family: Family::Dpp,
        description: "simplified provisioning: enrollee key carried OOB to a configurator".into(),
        symbols: SymbolTable::new(vec![FnSig::public("mac", 2)]),
        constants: vec!["MetaTag".into(), "ProvTag".into()],
        roles: list
            .into_iter()
            .map(|r| (r.name.clone(), Arc::new(r)))
            .collect::<BTreeMap<_, _>>(),
        device_roles: vec!["configurator".into(), "enrollee".into()],
        queries: family_queries(Family::Dpp),
    }
}
