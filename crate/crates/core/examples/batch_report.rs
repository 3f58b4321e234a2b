//! Driving the batch front end from code: `compare` mode into a scratch
//! directory, then reading the report back.

use ecoand::cli::{self, Args, Mode};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let args = Args {
        mode: Mode::Compare,
        scenario: concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_light_corridor.json").into(),
        preceding: None,
        seed: 0,
        out: out.path().into(),
        grid_dt: None,
        grid_dv: None,
        plans_cap: None,
        csv_dt: cli::DEFAULT_CSV_DT,
    };
    let report = cli::run(&args)?;
    print!("{}", cli::summary(&report));
    println!("scenario digest {}", report.scenario_digest);
    let mut files: Vec<String> = std::fs::read_dir(out.path())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("wrote {files:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
