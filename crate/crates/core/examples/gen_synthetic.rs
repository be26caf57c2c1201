//! Regenerate the bundled synthetic corpus.
//!
//! cargo run -p narrative-core --example gen_synthetic -- data/synthetic

use std::fs::{self, File};
use std::path::PathBuf;

use narrative_core::corpus::write_corpus;
use narrative_core::synthetic::{generate, write_di, write_planted, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "data/synthetic".into()),
    );
    fs::create_dir_all(&dir)?;
    let spec = SyntheticSpec::default();
    let corpus = generate(&spec);
    write_corpus(&corpus.records, File::create(dir.join("corpus.csv"))?)?;
    write_di(&corpus.di, File::create(dir.join("di.csv"))?)?;
    write_planted(&corpus.planted, File::create(dir.join("planted.csv"))?)?;
    let topics: String = spec
        .vocabulary
        .topics()
        .iter()
        .map(|t| format!("{t}\n"))
        .collect();
    fs::write(dir.join("topics.txt"), topics)?;
    println!(
        "{} records, {} planted links, {} months -> {}",
        corpus.records.len(),
        corpus.planted.len(),
        corpus.range.len(),
        dir.display()
    );
    Ok(())
}
