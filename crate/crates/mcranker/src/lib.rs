//! Zero-shot pointwise passage reranking with multi-perspective criteria
//! ensembles.
//!
//! The pipeline recruits a virtual annotation team for each query, has
//! every member write weighted scoring criteria, scores each candidate
//! passage per member over a 0..k scale, and ensembles the member scores
//! (summation, reciprocal-rank fusion, or an LLM assessor) into the
//! final ranking. First-stage BM25 retrieval, TREC run I/O, and NDCG@10
//! evaluation round out the toolchain.

pub mod bm25;
pub mod corpus;
pub mod error;
pub mod llm;
pub mod cli;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod trec;

pub use error::{Error, Result};
