//! Runtime around the symbolic core: configuration, the model gateway,
//! dataset loading, experiments, reports and the command-line tool.

pub mod config;
pub mod experiment;
pub mod explain;
pub mod fixtures;
pub mod gateway;
pub mod loaders;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod rules_io;
pub mod synthetic;
pub mod trace_view;
