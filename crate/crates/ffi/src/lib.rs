//! Placeholder; implemented after the core crate.
