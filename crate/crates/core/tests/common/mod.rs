#![allow(dead_code)]

use std::path::{Path, PathBuf};

use aes_core::config::RunConfig;
use aes_core::rubric::Trait;
use proptest::prelude::*;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The fixture config with outputs (and the cache) under `out`.
pub fn fixture_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixtures().join("config.toml")).expect("fixture config");
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Level counts used by the seven traits and the total.
pub const LEVEL_COUNTS: [usize; 3] = [3, 6, 33];

/// A random trait score in range.
pub fn trait_score(t: Trait) -> impl Strategy<Value = u8> {
    t.min_score()..=t.max_score()
}

/// Paired ratings: (n_levels, predicted, gold), lengths in `len`.
pub fn rating_pair(
    len: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = (usize, Vec<u32>, Vec<u32>)> {
    prop::sample::select(LEVEL_COUNTS.to_vec()).prop_flat_map(move |n| {
        let len = len.clone();
        len.prop_flat_map(move |k| {
            (
                Just(n),
                prop::collection::vec(0..n as u32, k),
                prop::collection::vec(0..n as u32, k),
            )
        })
    })
}
