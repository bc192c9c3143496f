//! Library surface of the experiment runner: configuration parsing and
//! validation, and the dispatch that writes artifacts plus a manifest.

pub mod config;
pub mod run;
