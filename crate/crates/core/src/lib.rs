//! Gated claim rewriting and retrieve-verify evaluation for dialogue
//! fact-checking.
//!
//! A dialogue response is rewritten into progressively more self-contained
//! surfaces, a consistency gate decides per instance whether the rewrite may
//! replace the original, and three protocols (retrieval only, verification
//! with gold evidence, and the combined pipeline) measure the effect.

pub mod backends;
pub mod data;
pub mod error;
pub mod eval;
pub mod gate;
pub mod normalize;
pub mod pipeline;
pub mod retrieval;
pub mod text;

pub use error::{Error, Result};
