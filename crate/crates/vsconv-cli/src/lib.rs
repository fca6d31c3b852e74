//! Experiment harness around the accelerator model: configuration,
//! synthetic operand generation, the VGG-16 catalog, end-to-end runs, and
//! the built-in walkthrough used by the `demo` subcommand.

pub mod catalog;
pub mod config;
pub mod demo;
pub mod gen;
pub mod runner;
