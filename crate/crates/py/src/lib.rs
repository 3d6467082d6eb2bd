//! Python bindings. Filled in after the core crate settles.
