#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arbiter;
pub mod bench;
pub mod codec;
pub mod geometry;
pub mod llm;
pub mod perception;
pub mod planner;
pub mod safety;
pub mod scenario;
pub mod trace;
pub mod world;
