//! The classic signed Diffie-Hellman demonstration with communicated
//! identity terms: each party signs both key shares, yet a compromised
//! insider can replace the initiator's identity and signature in flight,
//! leaving the responder with a wrong belief about its peer.
//!
//! The `sigma` variant additionally MACs the sender's identity under the
//! session key, which removes the attack: the insider cannot produce the
//! MAC without the key. Included to validate the engine against the
//! canonical identity-substitution example from the key-exchange
//! literature.

use super::{family_queries, Family, ProtocolModel};
use crate::deduce::SymbolTable;
use crate::event::EventKind;
use crate::role::{
    app, bind, bind_const, dh, p_pair, p_share, pair, share, v, EvArg, RoleBuilder, RoleProgram,
};
use crate::term::FnSig;
use std::collections::BTreeMap;
use std::sync::Arc;

const INBAND: usize = 0;

fn initiator(sigma: bool) -> RoleProgram {
    let mut b = RoleBuilder::new("initiator", &["inband"]);
    let ida = b.param("id");
    let x = b.fresh("x");
    b.send(INBAND, share(v(x)));
    let pid = b.var("peer-id");
    let ey = b.var("ey");
    let sig = b.var("sig");
    b.recv(
        INBAND,
        p_pair(bind_const(pid), p_pair(p_share(bind(ey)), bind(sig))),
    );
    b.check(
        v(sig),
        app(
            "sign",
            vec![
                pair(share(v(x)), share(v(ey))),
                app("sk", vec![v(pid)]),
            ],
        ),
    );
    b.emit(
        EventKind::Running,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(v(ida)),
            EvArg::Tpl(v(pid)),
            EvArg::Tpl(dh(v(x), v(ey))),
        ],
    );
    let own_sig = app(
        "sign",
        vec![pair(share(v(ey)), share(v(x))), app("sk", vec![v(ida)])],
    );
    if sigma {
        b.send(
            INBAND,
            pair(
                v(ida),
                pair(own_sig, app("mac", vec![dh(v(x), v(ey)), v(ida)])),
            ),
        );
    } else {
        b.send(INBAND, pair(v(ida), own_sig));
    }
    b.emit(
        EventKind::Commit,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(v(ida)),
            EvArg::Tpl(v(pid)),
            EvArg::Tpl(dh(v(x), v(ey))),
        ],
    );
    b.build()
}

fn responder(sigma: bool) -> RoleProgram {
    let mut b = RoleBuilder::new("responder", &["inband"]);
    let idc = b.param("id");
    let ex = b.var("ex");
    b.recv(INBAND, p_share(bind(ex)));
    let y = b.fresh("y");
    b.send(
        INBAND,
        pair(
            v(idc),
            pair(
                share(v(y)),
                app(
                    "sign",
                    vec![
                        pair(share(v(ex)), share(v(y))),
                        app("sk", vec![v(idc)]),
                    ],
                ),
            ),
        ),
    );
    let pid = b.var("peer-id");
    let sig = b.var("sig");
    if sigma {
        let m = b.var("mac");
        b.recv(
            INBAND,
            p_pair(bind_const(pid), p_pair(bind(sig), bind(m))),
        );
        b.check(
            v(sig),
            app(
                "sign",
                vec![
                    pair(share(v(y)), share(v(ex))),
                    app("sk", vec![v(pid)]),
                ],
            ),
        );
        b.check(v(m), app("mac", vec![dh(v(y), v(ex)), v(pid)]));
    } else {
        b.recv(INBAND, p_pair(bind_const(pid), bind(sig)));
        b.check(
            v(sig),
            app(
                "sign",
                vec![
                    pair(share(v(y)), share(v(ex))),
                    app("sk", vec![v(pid)]),
                ],
            ),
        );
    }
    b.emit(
        EventKind::Commit,
        vec![
            EvArg::SelfChan,
            EvArg::Tpl(v(idc)),
            EvArg::Tpl(v(pid)),
            EvArg::Tpl(dh(v(y), v(ex))),
        ],
    );
    b.build()
}

pub fn model(sigma: bool) -> ProtocolModel {
    let mut sigs = vec![FnSig::public("sign", 2), FnSig::private("sk", 1)];
    if sigma {
        sigs.push(FnSig::public("mac", 2));
    }
    let list = vec![initiator(sigma), responder(sigma)];
    ProtocolModel {
        name: if sigma {
            "signed-dh-sigma".into()
        } else {
            "signed-dh".into()
        },
        family: Family::SignedDh,
        description: if sigma {
            "signed DH with the sender identity MACed under the session key".into()
        } else {
            "signed DH, vulnerable to identity substitution by an insider".into()
        },
        symbols: SymbolTable::new(sigs),
        constants: vec![],
        roles: list
            .into_iter()
            .map(|r| (r.name.clone(), Arc::new(r)))
            .collect::<BTreeMap<_, _>>(),
        device_roles: vec!["initiator".into(), "responder".into()],
        queries: family_queries(Family::SignedDh),
    }
}
