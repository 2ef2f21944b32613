//! Configuration, training loop, checkpoints, embedding export and
//! ablation grids.

mod ablation;
mod checkpoint;
mod config;
mod history;
mod trainer;

pub use ablation::{
    run_ablation, write_ablation_csv, AblationCell, AblationProtocol, AblationRow,
    ComponentsProtocol, FusionProtocol, LossesProtocol, ProtocolRegistry, SweepKey, SweepProtocol,
};
pub use checkpoint::{read_history, write_history, Checkpoint, DESCRIPTOR, HISTORY};
pub use config::{apply_override, DataConfig, ExperimentConfig, RunConfig};
pub use history::HistoryRecord;
pub use trainer::{
    distance, export_embeddings, planned_steps, stream_rng, train, train_with, Corpus, Detector,
    EmbeddingExport, EvalReport, ExportRow, Stream, TrainOutcome,
};
