//! Structured text format for models, queries, and scenarios.

use crate::scenario::Scenario;

pub fn print_scenario(s: &Scenario) -> String {
    format!("{s:?}")
}
