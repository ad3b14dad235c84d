//! Corpus ingestion: PNG I/O, pairing, deterministic batching,
//! augmentation, and a procedural face generator for tests and demos.

pub mod batch;
pub mod index;
pub mod io;
pub mod procedural;

pub use batch::{epoch_batches, flip_flags, flip_samples, hflip_augment, BatchStream, PairBatch};
pub use index::{synth_clean_lr, DatasetIndex, PairingMode};
pub use io::{read_dir_pngs, read_png, write_gray_png, write_png, ImageRecord};
pub use procedural::{procedural_face, write_corpus, CorpusSpec};
