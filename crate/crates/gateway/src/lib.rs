//! Runs the software link pipeline against a repository and serves the
//! curation API and OAI-PMH provider.

pub mod api;
pub mod config;
pub mod demo;
pub mod http;
pub mod pipeline;
pub mod server;
