//! Dataset loading, batch runs, reports and the command-line front end's
//! building blocks.

pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod io;
pub mod run;
pub mod synth;

use crate::backends::cache::DiskCache;
use crate::backends::scene::{scene_backends, SceneModel};
use crate::backends::Backends;
use crate::error::{Error, Result};

pub use config::RunSettings;
pub use dataset::{load_dataset, DatasetManifest, Layout};
pub use run::{run_task, RunOptions, RunReport};

/// Backend names accepted on the command line. Only the deterministic
/// scene mocks ship with this crate; real adapters plug in through the
/// traits in [`crate::backends`].
pub const BACKENDS: [&str; 1] = ["mock"];

/// Builds the named backend bundle, wrapped in the on-disk cache when
/// `PROMAC_CACHE` is set.
pub fn backends_by_name(name: &str) -> Result<Backends> {
    let backends = match name {
        "mock" | "scene" => scene_backends(SceneModel::default()),
        other => {
            return Err(Error::Config(format!(
                "unknown backend '{other}' (available: {})",
                BACKENDS.join(", ")
            )))
        }
    };
    Ok(match DiskCache::from_env() {
        Some(cache) => {
            log::info!("caching backend responses in {}", cache.root().display());
            backends.with_cache(cache)
        }
        None => backends,
    })
}
