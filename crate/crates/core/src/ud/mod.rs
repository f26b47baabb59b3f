//! CoNLL-U ingestion and Hebrew binyan harvesting.

pub mod conllu;
pub mod harvest;

pub use conllu::{parse_conllu, ConlluError, ConlluSentence, ConlluToken, TokenId};
pub use harvest::{harvest_binyan, synthetic_pool, BinyanPool, Harvest, PoolEntry, Scope};
