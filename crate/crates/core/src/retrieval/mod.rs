//! Passage corpus, BM25 ranking and the three-stage retrieval cascade.
//!
//! ```
//! use claimgate::retrieval::{Bm25Params, ChunkParams, CorpusDoc, Index};
//!
//! let docs = vec![
//!     CorpusDoc { title: "Elvis Presley".into(), text: "Elvis was born in Tupelo.".into() },
//!     CorpusDoc { title: "Memphis".into(), text: "Memphis is a city in Tennessee.".into() },
//! ];
//! let index = Index::build(docs, ChunkParams::default(), Bm25Params::default()).unwrap();
//! let hits = index.search("where was elvis born", 10);
//! assert_eq!(index.passage(hits[0].0).doc_id, "Elvis Presley");
//! ```

mod bm25;
mod cascade;
mod chunk;
mod gold;
mod index;
mod tokenize;

pub use bm25::{Bm25Params, IDF_ID};
pub use cascade::{run_cascade, CascadeConfig, CascadeResult, CascadeStage, PassageHit};
pub use chunk::{chunk_count, chunk_document, window_ranges, ChunkParams, Passage};
pub use gold::{first_hit_ranks, gold_targets, match_gold, GoldLevel, GoldTarget};
pub use index::{
    normalize_title, read_corpus, CorpusDoc, Index, IndexManifest, Posting, INDEX_FORMAT,
};
pub use tokenize::{terms, tokenize, Token, TOKENIZER_ID};
