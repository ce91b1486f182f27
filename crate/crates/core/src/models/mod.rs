//! The shipped protocol models: role programs, symbol tables, and the
//! queries bound to each model.
//!
//! Every pairing-style model follows the same structure: an insecure
//! in-band channel carries the key exchange, and each device owns one
//! private physical channel through which the user reads codes or carries
//! out-of-band payloads. Device compromise is modelled as leaking that
//! private channel to the attacker.

mod dpp;
mod noob;
mod signed_dh;
mod ssp;

use crate::deduce::SymbolTable;
use crate::error::{Error, Result};
use crate::query::{self, Query};
use crate::role::RoleProgram;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// The reserved instance name of the registration server. It is never
/// compromisable in shipped scenarios; the compromise event for it exists
/// only so the query premise is expressible.
pub const SERVER_NAME: &str = "S";

/// Model families drive channel topology, completion events, and which
/// builtin queries apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Two-device pairing: initiator and non-initiator, one user ceremony.
    Ssp,
    /// Peer registration against a fixed server, user carries one OOB message.
    Noob,
    /// Configurator provisions enrollees from an OOB payload.
    Dpp,
    /// Signed DH with communicable identities; no user, no physical channels.
    SignedDh,
}

/// A protocol model: named role programs plus everything the engine needs
/// to instantiate and judge scenarios of it.
#[derive(Debug, Clone)]
pub struct ProtocolModel {
    pub name: String,
    pub family: Family,
    pub description: String,
    pub symbols: SymbolTable,
    /// Public constant tags of the model.
    pub constants: Vec<String>,
    pub roles: BTreeMap<String, Arc<RoleProgram>>,
    /// Roles assignable to scenario devices (the user and server roles are
    /// implicit).
    pub device_roles: Vec<String>,
    pub queries: Vec<Query>,
}

impl ProtocolModel {
    pub fn role(&self, name: &str) -> Result<&Arc<RoleProgram>> {
        self.roles.get(name).ok_or_else(|| {
            Error::InvalidScenario(format!("model {} has no role {name}", self.name))
        })
    }

    pub fn query(&self, name: &str) -> Result<&Query> {
        self.queries.iter().find(|q| q.name == name).ok_or_else(|| {
            Error::UnknownQuery {
                name: name.to_string(),
                known: self
                    .queries
                    .iter()
                    .map(|q| q.name.clone())
                    .collect::<Vec<_>>()
                    .join(", "),
            }
        })
    }

    /// The misbinding-style queries of the model (excludes secrecy sanity).
    pub fn misbinding_queries(&self) -> Vec<&Query> {
        self.queries
            .iter()
            .filter(|q| q.name != "secrecy-sanity")
            .collect()
    }

    pub fn check_wellformed(&self) -> Result<()> {
        for role in self.roles.values() {
            role.check_wellformed(&self.symbols)?;
        }
        for q in &self.queries {
            q.validate()?;
        }
        Ok(())
    }
}

pub const MODEL_NAMES: [&str; 9] = [
    "ssp-nc",
    "ssp-oob",
    "ssp-secret-code",
    "ssp-identity-bound",
    "ssp-identity-bound-lax",
    "eap-noob",
    "dpp",
    "signed-dh",
    "signed-dh-sigma",
];

pub fn family_of(name: &str) -> Result<Family> {
    Ok(match name {
        "ssp-nc" | "ssp-oob" | "ssp-secret-code" | "ssp-identity-bound"
        | "ssp-identity-bound-lax" => Family::Ssp,
        "eap-noob" => Family::Noob,
        "dpp" => Family::Dpp,
        "signed-dh" | "signed-dh-sigma" => Family::SignedDh,
        _ => {
            return Err(Error::UnknownModel {
                name: name.to_string(),
                known: MODEL_NAMES.join(", "),
            })
        }
    })
}

/// Builds a shipped model by name.
pub fn build(name: &str) -> Result<ProtocolModel> {
    let model = match name {
        "ssp-nc" => ssp::numeric_comparison(),
        "ssp-oob" => ssp::oob(),
        "ssp-secret-code" => ssp::secret_code(),
        "ssp-identity-bound" => ssp::identity_bound(true),
        "ssp-identity-bound-lax" => ssp::identity_bound(false),
        "eap-noob" => noob::model(),
        "dpp" => dpp::model(),
        "signed-dh" => signed_dh::model(false),
        "signed-dh-sigma" => signed_dh::model(true),
        _ => {
            return Err(Error::UnknownModel {
                name: name.to_string(),
                known: MODEL_NAMES.join(", "),
            })
        }
    };
    debug_assert!(model.check_wellformed().is_ok());
    Ok(model)
}

pub fn catalog() -> Vec<ProtocolModel> {
    MODEL_NAMES.iter().map(|n| build(n).unwrap()).collect()
}

/// The queries bound to a family.
pub(crate) fn family_queries(family: Family) -> Vec<Query> {
    match family {
        Family::Ssp | Family::Dpp => vec![
            query::ssp_misbinding('A'),
            query::ssp_misbinding('B'),
            query::ssp_secrecy_sanity(),
        ],
        Family::Noob => vec![query::noob_misbinding(), query::noob_secrecy_sanity()],
        Family::SignedDh => vec![query::dh_agreement(), query::dh_secrecy_sanity()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_model_is_wellformed() {
        for name in MODEL_NAMES {
            let m = build(name).unwrap();
            m.check_wellformed().unwrap();
            assert_eq!(m.name, name);
            assert!(!m.device_roles.is_empty());
        }
    }

    #[test]
    fn unknown_model_lists_valid_names() {
        let err = build("nope").unwrap_err().to_string();
        assert!(err.contains("ssp-nc"));
        assert!(err.contains("eap-noob"));
    }

    #[test]
    fn ssp_models_bind_both_query_versions() {
        let m = build("ssp-nc").unwrap();
        assert!(m.query("ssp-misbinding-A").is_ok());
        assert!(m.query("ssp-misbinding-B").is_ok());
        assert!(m.query("secrecy-sanity").is_ok());
    }
}
