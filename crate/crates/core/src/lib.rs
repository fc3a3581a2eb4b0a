// SPDX-License-Identifier: Apache-2.0

//! Hierarchical prompting for LLM-driven Verilog generation.
//!
//! A design is built submodule by submodule: each step renders a prompt,
//! extracts the returned module, checks it in a simulator, and feeds
//! diagnostics back until it passes. A benchmark harness runs the pipeline
//! over a suite and scores it with pass@k, latency, and token cost.

pub mod bench;
pub mod cli;
pub mod engine;
pub mod llm;
pub mod metrics;
pub mod plan;
pub mod prompts;
pub mod sim;
pub mod vcode;
