//! On-disk formats: `REMB` embedding matrices, `RFKT` checkpoints, JSON Lines
//! records, corpus directories and run manifests.

mod checkpoint;
mod corpus_dir;
mod embeddings;
mod jsonl;
mod manifest;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, round_to_storage, write_checkpoint, write_checkpoint_to, Checkpoint,
    CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use corpus_dir::{load_corpus, save_corpus, CORPUS_FORMAT_VERSION};
pub use embeddings::{
    read_embeddings, read_embeddings_from, write_embeddings, write_embeddings_to, EmbeddingFile, EmbeddingHeader,
    EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use jsonl::{parse_jsonl, read_jsonl, write_jsonl, write_jsonl_to};
pub use manifest::{config_hash, Manifest};
