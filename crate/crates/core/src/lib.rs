//! Retrieval engine and benchmark harness for temporally evolving corpora:
//! FM-index constrained generative retrieval, flat-index dense retrieval and
//! BM25, with update scenarios, metrics, a FLOPs cost model and
//! dynamic-parameter analysis.

pub mod container;
pub mod corpus;
pub mod dense_retriever;
pub mod dp_analysis;
pub mod efficiency;
pub mod error;
pub mod fm_index;
pub mod gen_retriever;
pub mod harness;
pub mod sparse_retriever;

pub use error::{Error, Result};
