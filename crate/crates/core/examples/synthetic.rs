//! Writes a seeded synthetic FER-style dataset, optionally training on it.
//!
//! cargo run --release --example synthetic -- <out.csv> [per_class] [--train epochs]

use std::time::Instant;

use engagement::synthetic::{generate, split_every, SyntheticConfig};
use engagement::training::{accuracy, train_with, TrainConfig};
use engagement::{io, Model};

fn main() -> engagement::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map(String::as_str).unwrap_or("synthetic.csv");
    let per_class = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let dataset = generate(&SyntheticConfig { per_class, ..Default::default() });
    io::save_fer_csv(&dataset, out)?;
    eprintln!("wrote {} samples to {out}", dataset.len());

    if let Some(i) = args.iter().position(|a| a == "--train") {
        let epochs = args.get(i + 1).and_then(|s| s.parse().ok()).unwrap_or(50);
        let (train, held) = split_every(dataset, 5);
        let (train, held) = (train.to_examples(), held.to_examples());
        let config = TrainConfig { epochs, ..Default::default() };
        let start = Instant::now();
        let model = Model::default_architecture(48, 48)?.init_parameters(config.seed);
        let outcome = train_with(model, &train, &config, |s| {
            eprintln!(
                "epoch {:>3} loss {:.4} acc {:.4}  ({:.1}s)",
                s.epoch,
                s.loss,
                s.train_accuracy,
                start.elapsed().as_secs_f64()
            )
        })?;
        eprintln!("held-out accuracy {:.4}", accuracy(&outcome.model, &held)?);
    }
    Ok(())
}
