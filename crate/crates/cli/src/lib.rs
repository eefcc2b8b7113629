//! Experiment specs, the runner behind the `cyberdyn` binary, and the bundled specs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod runner;
pub mod spec;

pub use runner::{run_experiment, RunManifest};
pub use spec::{ExperimentSpec, FieldError, SpecErrors};

/// Bundled specs as `(name, TOML text)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig4", include_str!("../specs/fig4.toml")),
    ("fig5", include_str!("../specs/fig5.toml")),
    ("fig6", include_str!("../specs/fig6.toml")),
    ("fig7a", include_str!("../specs/fig7a.toml")),
    ("fig7b", include_str!("../specs/fig7b.toml")),
    ("fig8", include_str!("../specs/fig8.toml")),
    ("fig9", include_str!("../specs/fig9.toml")),
    ("fig10", include_str!("../specs/fig10.toml")),
    ("drift", include_str!("../specs/drift.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
