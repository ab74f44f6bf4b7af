//! Corpus ingestion and dataset preparation.

mod bank;
mod batch;
mod corpus;
mod kcore;
mod snapshot;
mod split;
pub mod synthetic;
mod vocab;

pub use bank::{build_banks, BankShape, Banks, ReviewBank};
pub use batch::epoch_batches;
pub use corpus::{parse_corpus, parse_line, parse_reader, write_corpus, Interaction, ParseReport};
pub use kcore::k_core_filter;
pub use snapshot::{Example, PrepareConfig, Snapshot, Stats, SNAPSHOT_VERSION};
pub use split::{time_split, DatasetSplit, Part};
pub use vocab::{tokenize, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
