//! Scenario enumeration and misbinding variant classification.
