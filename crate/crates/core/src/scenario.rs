//! Scenarios: a world to explore — role instances, channel topology,
//! physical-access assignments, compromise flags, and search bounds.

use crate::error::{Error, Result};
use crate::models;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Exploration bounds. The engine is a bounded explorer, not a prover:
/// verdicts are always "within bounds".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Maximum trace depth in transitions.
    pub max_steps: u32,
    /// Deduction depth for attacker derivations.
    pub deduction_depth: u32,
    /// Sessions per replicable role, and the attacker's fresh-nonce budget.
    pub max_sessions: u32,
    /// Safety valve on distinct explored states.
    pub max_states: usize,
}

impl Default for SearchBounds {
    fn default() -> SearchBounds {
        SearchBounds {
            max_steps: 40,
            deduction_depth: crate::deduce::DEFAULT_DEDUCTION_DEPTH,
            max_sessions: 2,
            max_states: 400_000,
        }
    }
}

/// A device instance: which role program it runs and whether it starts
/// compromised. Compromised devices still run their honest program — the
/// attacker additionally controls their private channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDecl {
    pub name: String,
    pub role: String,
    pub compromised: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserDecl {
    /// An honest user who intends to pair two devices and has physical
    /// access to exactly those two.
    Honest {
        name: String,
        initiator: String,
        responder: String,
    },
    /// A compromised user: her accessed channels leak to the attacker at
    /// scenario start and she runs no ceremony.
    Compromised { name: String, access: Vec<String> },
}

impl UserDecl {
    pub fn name(&self) -> &str {
        match self {
            UserDecl::Honest { name, .. } | UserDecl::Compromised { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: String,
    pub devices: Vec<DeviceDecl>,
    pub users: Vec<UserDecl>,
    /// Devices or users that may be compromised mid-trace (off by default;
    /// static compromise at step 0 suffices for the shipped variants).
    pub dynamic_compromise: Vec<String>,
    pub bounds: SearchBounds,
}

impl Scenario {
    pub fn new(name: impl Into<String>, model: impl Into<String>) -> Scenario {
        Scenario {
            name: name.into(),
            model: model.into(),
            devices: Vec::new(),
            users: Vec::new(),
            dynamic_compromise: Vec::new(),
            bounds: SearchBounds::default(),
        }
    }

    pub fn device(mut self, name: &str, role: &str) -> Self {
        self.devices.push(DeviceDecl {
            name: name.into(),
            role: role.into(),
            compromised: false,
        });
        self
    }

    pub fn compromised_device(mut self, name: &str, role: &str) -> Self {
        self.devices.push(DeviceDecl {
            name: name.into(),
            role: role.into(),
            compromised: true,
        });
        self
    }

    pub fn honest_user(mut self, name: &str, initiator: &str, responder: &str) -> Self {
        self.users.push(UserDecl::Honest {
            name: name.into(),
            initiator: initiator.into(),
            responder: responder.into(),
        });
        self
    }

    pub fn compromised_user(mut self, name: &str, access: &[&str]) -> Self {
        self.users.push(UserDecl::Compromised {
            name: name.into(),
            access: access.iter().map(|s| s.to_string()).collect(),
        });
        self
    }

    /// Structural checks that do not need the model: unique names, user
    /// references resolve, intent endpoints are distinct.
    pub fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = self.devices.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScenario("duplicate device name".into()));
        }
        let known = |n: &str| {
            n == models::SERVER_NAME || self.devices.iter().any(|d| d.name == n)
        };
        for u in &self.users {
            match u {
                UserDecl::Honest {
                    initiator,
                    responder,
                    ..
                } => {
                    if initiator == responder {
                        return Err(Error::InvalidScenario(format!(
                            "user {} intends a device paired with itself",
                            u.name()
                        )));
                    }
                    for n in [initiator, responder] {
                        if !known(n) {
                            return Err(Error::InvalidScenario(format!(
                                "user {} references unknown device {n}",
                                u.name()
                            )));
                        }
                    }
                }
                UserDecl::Compromised { access, .. } => {
                    for n in access {
                        if !known(n) {
                            return Err(Error::InvalidScenario(format!(
                                "user {} references unknown device {n}",
                                u.name()
                            )));
                        }
                    }
                }
            }
        }
        for d in &self.dynamic_compromise {
            if !known(d) && !self.users.iter().any(|u| u.name() == d) {
                return Err(Error::InvalidScenario(format!(
                    "dynamic compromise target {d} unknown"
                )));
            }
        }
        Ok(())
    }

    /// A stable fingerprint over the canonical text form, recorded in
    /// trace files so a trace can be checked against its scenario.
    pub fn fingerprint(&self) -> String {
        let text = crate::textfmt::print_scenario(self);
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        hex(&h.finalize()[..8])
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builtin scenario names, resolvable for a compatible model family.
pub const BUILTIN_SCENARIOS: [&str; 10] = [
    "honest", "fig3", "fig5", "fig6", "fig7-a", "fig7-b", "fig7-c", "fig7-d", "fig7-e", "insider",
];

/// Resolves a builtin scenario for the given model. The topologies follow
/// the shipped attack catalog: `fig3`/`fig7-*` are the device-pairing
/// setups, `fig5` the server-registration one, `fig6` an alias of
/// `fig7-e` (the double-misbinding topology), `insider` the signed-DH
/// demonstration with one compromised identity.
pub fn builtin_scenario(model: &str, name: &str) -> Result<Scenario> {
    let family = models::family_of(model)?;
    let unknown = || Error::UnknownScenario {
        name: name.to_string(),
        known: BUILTIN_SCENARIOS.join(", "),
    };
    let mut s = match (family, name) {
        (models::Family::Ssp, "honest") => Scenario::new("honest", model)
            .device("A", "initiator")
            .device("B", "non-initiator")
            .honest_user("u1", "A", "B"),
        (models::Family::Ssp, "fig3" | "fig7-a") => Scenario::new(name, model)
            .device("A", "initiator")
            .compromised_device("B", "non-initiator")
            .device("C", "non-initiator")
            .honest_user("u1", "A", "B")
            .compromised_user("u2", &["C"]),
        (models::Family::Ssp, "fig7-b") => Scenario::new(name, model)
            .compromised_device("A", "initiator")
            .device("B", "non-initiator")
            .device("C", "initiator")
            .honest_user("u1", "A", "B")
            .compromised_user("u2", &["C"]),
        (models::Family::Ssp, "fig7-c") => Scenario::new(name, model)
            .device("A", "initiator")
            .compromised_device("B", "non-initiator")
            .compromised_device("C", "non-initiator")
            .honest_user("u1", "A", "B"),
        (models::Family::Ssp, "fig7-d") => Scenario::new(name, model)
            .compromised_device("A", "initiator")
            .device("B", "non-initiator")
            .compromised_device("C", "initiator")
            .honest_user("u1", "A", "B"),
        (models::Family::Ssp, "fig6" | "fig7-e") => Scenario::new(name, model)
            .device("A1", "initiator")
            .compromised_device("B1", "non-initiator")
            .compromised_device("A2", "initiator")
            .device("B2", "non-initiator")
            .honest_user("u1", "A1", "B1")
            .honest_user("u2", "A2", "B2"),
        (models::Family::Noob, "honest") => Scenario::new("honest", model)
            .device("P", "peer")
            .honest_user("u1", models::SERVER_NAME, "P"),
        (models::Family::Noob, "fig5") => Scenario::new("fig5", model)
            .compromised_device("B", "peer")
            .device("C", "peer")
            .honest_user("u1", models::SERVER_NAME, "B")
            .compromised_user("u2", &["C"]),
        (models::Family::Dpp, "honest") => Scenario::new("honest", model)
            .device("CF", "configurator")
            .device("E", "enrollee")
            .honest_user("u1", "CF", "E"),
        (models::Family::Dpp, "fig3" | "fig7-a") => Scenario::new(name, model)
            .device("CF", "configurator")
            .compromised_device("B", "enrollee")
            .device("C", "enrollee")
            .honest_user("u1", "CF", "B")
            .compromised_user("u2", &["C"]),
        (models::Family::SignedDh, "honest") => Scenario::new("honest", model)
            .device("A", "initiator")
            .device("C", "responder"),
        (models::Family::SignedDh, "insider") => Scenario::new("insider", model)
            .device("A", "initiator")
            .compromised_device("B", "responder")
            .device("C", "responder"),
        _ => return Err(unknown()),
    };
    s.name = name.to_string();
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenarios_validate() {
        for name in ["honest", "fig3", "fig6", "fig7-b", "fig7-c", "fig7-d"] {
            builtin_scenario("ssp-nc", name).unwrap();
        }
        builtin_scenario("eap-noob", "fig5").unwrap();
        builtin_scenario("eap-noob", "honest").unwrap();
        builtin_scenario("dpp", "honest").unwrap();
        builtin_scenario("signed-dh", "insider").unwrap();
    }

    #[test]
    fn unknown_builtin_is_rejected() {
        assert!(builtin_scenario("ssp-nc", "fig99").is_err());
        assert!(builtin_scenario("ssp-nc", "fig5").is_err());
    }

    #[test]
    fn self_pairing_is_rejected() {
        let s = Scenario::new("bad", "ssp-nc")
            .device("A", "initiator")
            .honest_user("u1", "A", "A");
        assert!(s.validate().is_err());
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = builtin_scenario("ssp-nc", "fig3").unwrap();
        let b = builtin_scenario("ssp-nc", "fig3").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
