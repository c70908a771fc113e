//! Intent-driven IP-over-optical capacity planning.
//!
//! Natural-language requests pass through analyzer, planner, calculator and
//! executor roles ([`pipeline`]) backed by a chat-completion gateway
//! ([`llm_gateway`]). All arithmetic is native: routing and module sizing live
//! in [`capacity_solver`], intent compilation in [`intent_compiler`], and
//! rendering in [`render`].

pub mod capacity_solver;
pub mod net_model;
pub mod intent_compiler;
pub mod llm_gateway;
pub mod rag_store;
pub mod render;
pub mod pipeline;
pub mod eval;
pub mod service;
