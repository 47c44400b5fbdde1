#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod error;
pub mod llm_client;
pub mod persona;
pub mod perturb;
pub mod report;
pub mod rlhf_sim;
pub mod rng;
pub mod semantic;
pub mod sentiment;
pub mod synthetic;
pub mod syntactic;

pub use error::{Error, Result};
