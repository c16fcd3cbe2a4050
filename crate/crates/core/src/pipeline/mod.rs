//! Staged claim surfaces.
//!
//! R1 through R4 are cumulative: de-contraction, punctuation restoration,
//! true-casing, then scoped pronoun substitution. R5 is a single decoder
//! rewrite of the original claim. Every stage logs its edits so that
//! replaying them onto the predecessor reproduces the stage output.
//!
//! ```
//! use claimgate::backends::StubBackend;
//! use claimgate::data::{DialogueInstance, Label, Subset};
//! use claimgate::pipeline::{PipelineConfig, Stage, SurfaceBuilder};
//!
//! let inst = DialogueInstance {
//!     instance_id: "x".into(),
//!     context_turns: vec!["Have you heard of Elvis Presley?".into()],
//!     response: "he was born in tupelo".into(),
//!     label: Label::Supports,
//!     evidence: vec![],
//!     subset: Subset::Factual,
//! };
//! let stub = StubBackend::new().with_proper_nouns(["tupelo"]);
//! let s = SurfaceBuilder::new(&stub, PipelineConfig::default()).build(&inst);
//! assert_eq!(s.r3, "He was born in Tupelo.");
//! assert_eq!(s.r4, "Elvis Presley was born in Tupelo.");
//! assert_eq!(s.get(Stage::R0), "he was born in tupelo");
//! ```

mod lexicon;
mod scope;
mod surfaces;

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

pub use lexicon::PronounLexicon;
pub use scope::{classify_pronouns, ScopeClass, ScopedMention};
pub use surfaces::{
    diff_edits, replay_edits, ClaimSurfaces, Edit, PipelineConfig, Stage, SurfaceBuilder,
};

use crate::data::DialogueInstance;
use crate::error::{Error, Result};

/// Build surfaces for every instance, preserving order. Parallelism follows
/// the ambient rayon pool.
pub fn build_all(
    builder: &SurfaceBuilder<'_>,
    instances: &[DialogueInstance],
) -> Vec<ClaimSurfaces> {
    instances.par_iter().map(|i| builder.build(i)).collect()
}

/// Write surfaces as one JSON object per line.
pub fn write_surfaces<W: Write>(mut out: W, surfaces: &[ClaimSurfaces]) -> std::io::Result<()> {
    for s in surfaces {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_surfaces(path: &Path) -> Result<Vec<ClaimSurfaces>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}
