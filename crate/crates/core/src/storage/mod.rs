//! File formats: localization tables (CSV), frame stacks (raw `u16le`
//! payload plus a JSON sidecar) and the JSON configuration file.
//!
//! All lengths are in nanometres and all intensities in photons.

mod config;
mod locs;
mod stack;

pub use config::{
    load_config, parse_config, CameraSpec, Config, GeometryConfig, LossSettings, MetricSettings,
    PsfConfig, PsfType, SplineGridConfig,
};
pub use locs::{read_locs, write_locs, LocTable};
pub use stack::{read_stack, sidecar_path, write_stack, StackHeader, STACK_DTYPE, STACK_VERSION};
