//! IO formats, judge backends, the annotation service and the pipelines
//! behind the `prefscore` command.

pub mod config;
pub mod diagnose;
pub mod formats;
pub mod judges;
pub mod manifest;
pub mod pipeline;
pub mod prompt;
pub mod service;
pub mod studies;
pub mod cli;
