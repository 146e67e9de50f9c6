//! IO and orchestration for hypothetical-summary retrieval: on-disk corpus,
//! query, and heads formats, the synthetic corpus generator, run
//! configuration, and report rendering. The `hysum` binary wires these into
//! the `gen`, `validate`, `retrieve`, `train`, and `eval` subcommands; the
//! scoring and training math lives in `hysum-core`.

pub mod config;
pub mod format;
pub mod report;
pub mod synth;
