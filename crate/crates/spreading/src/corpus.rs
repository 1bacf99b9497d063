//! Spec files compiled into the binary.

use std::path::Path;

use crate::config::{parse_spec_with, Overrides, Result, SpecDocument};

/// `(file name, contents)` of every built-in spec.
pub const CORPUS: &[(&str, &str)] = &[
    ("kpp_scalar.toml", include_str!("../corpus/kpp_scalar.toml")),
    ("kpp_drift.toml", include_str!("../corpus/kpp_drift.toml")),
    ("periodic_scalar.toml", include_str!("../corpus/periodic_scalar.toml")),
    ("piecewise_homogenization.toml", include_str!("../corpus/piecewise_homogenization.toml")),
    ("mutation_constant.toml", include_str!("../corpus/mutation_constant.toml")),
    ("mutation_isotropic.toml", include_str!("../corpus/mutation_isotropic.toml")),
    ("mutation_periodic.toml", include_str!("../corpus/mutation_periodic.toml")),
    ("strong_coupling_anisotropic.toml", include_str!("../corpus/strong_coupling_anisotropic.toml")),
    ("extinction_mutation.toml", include_str!("../corpus/extinction_mutation.toml")),
    ("cooperative_three_species.toml", include_str!("../corpus/cooperative_three_species.toml")),
];

pub fn load(file: &str, ov: &Overrides) -> Option<Result<SpecDocument>> {
    CORPUS.iter().find(|(f, _)| *f == file).map(|(f, text)| parse_spec_with(text, Path::new("."), f.trim_end_matches(".toml"), ov))
}

pub fn load_all(ov: &Overrides) -> Result<Vec<SpecDocument>> {
    CORPUS.iter().map(|(f, text)| parse_spec_with(text, Path::new("."), f.trim_end_matches(".toml"), ov)).collect()
}
