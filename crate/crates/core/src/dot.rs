//! Sequence-diagram DOT export for traces.

use crate::trace::Trace;

pub fn export_dot(_trace: &Trace) -> String {
    String::new()
}
