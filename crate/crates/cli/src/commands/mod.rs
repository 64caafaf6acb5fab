//! One module per subcommand. Each exposes `XxxArgs` (flags, every one
//! optional so a config file can supply it) and `run`.

use std::path::PathBuf;

pub mod ablate;
pub mod eval;
pub mod refine;
pub mod source;
pub mod synth;
pub mod train;
pub mod trimap;

/// Flags every command accepts.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Common {
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Never changes any output.
    #[arg(long)]
    pub jobs: Option<usize>,
}
