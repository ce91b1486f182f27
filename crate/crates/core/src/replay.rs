//! Concrete re-execution of symbolic traces.
