//! File formats and synthetic data.

mod binary;
mod frames;
mod manifest;
mod synth;
mod tables;

pub use binary::{
    load_flow, load_jnd, load_params, load_scalar_map, read_flow, read_jnd, read_params, read_scalar_map, save_flow,
    save_jnd, save_params, save_scalar_map, write_flow, write_jnd, write_params, write_scalar_map, FLOW_MAGIC,
    JND_MAGIC, PARAMS_MAGIC, PARAMS_VERSION, SCALAR_MAGIC,
};
pub use frames::{
    encode_pgm, parse_pgm, read_frame, read_pgm, read_raw, sidecar_path, write_pgm, write_raw, RawHeader,
};
pub use manifest::{ChunkGrids, VideoManifest, MANIFEST_VERSION};
pub use synth::{
    analyze_chunk, gen_synthetic_bw, gen_synthetic_video, gen_viewpoints, scale_trace, BandwidthProfile, ChunkAnalysis,
    GazeSpec, Scene, SyntheticVideo, VideoSpec,
};
pub use tables::{
    load_bandwidth, load_viewpoints, read_bandwidth, read_train_log, read_viewpoints, save_bandwidth, save_viewpoints,
    write_bandwidth, write_session_csv, write_train_log, write_viewpoints, SessionSummary,
};
