#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use longdoc_qa::config::{ModelProvider, PerceptionProvider, Providers, RunConfig};
use longdoc_qa::synth::{write_fixture_corpus, FixtureDoc};
use longdoc_qa::Language;

pub const PAGE_COUNTS: [u32; 3] = [15, 77, 250];

/// Three fixture documents (the middle one Arabic) with scripted perception
/// and the synthetic agent model, running in `<dir>/run`.
pub fn fixture_config(dir: &Path, seed: &str) -> RunConfig {
    let docs = [
        FixtureDoc::new("short", PAGE_COUNTS[0], Language::English),
        FixtureDoc::new("medium", PAGE_COUNTS[1], Language::Arabic),
        FixtureDoc::new("long", PAGE_COUNTS[2], Language::English),
    ];
    let corpus = dir.join("corpus");
    let fixture = write_fixture_corpus(&corpus, &docs, 150).expect("fixture corpus");
    let mut config = RunConfig::new(
        fixture.manifest,
        dir.join("run"),
        seed,
        Providers {
            agents: ModelProvider::Synthetic { accuracy: None },
            perception: PerceptionProvider::Mock {
                scripts_dir: Some(fixture.scripts_dir),
            },
            eval: Some(ModelProvider::Synthetic { accuracy: None }),
        },
    );
    config.workers = 4;
    config
}

/// Writes the config next to the corpus and returns its path.
pub fn write_config(dir: &Path, config: &RunConfig) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, config.to_toml()).expect("write config");
    path
}

pub fn cli() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_longdoc-qa"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

/// Chunk count for the given page count, from the window arithmetic.
pub fn expected_chunks(pages: u32, size: u32, overlap: u32) -> u32 {
    if pages <= size {
        1
    } else {
        1 + (pages - size).div_ceil(size - overlap)
    }
}
