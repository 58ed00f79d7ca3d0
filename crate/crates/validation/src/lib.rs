//! Acceptance checks live in `tests/acceptance.rs`; this library is empty.
