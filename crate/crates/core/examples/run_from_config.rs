// Drives the same pipeline as the command-line tool from a JSON experiment
// file: generate the instance, fit the divisors, iterate, verify.

use std::path::{Path, PathBuf};
use torus_kam::cli::{self, ExperimentConfig};
use torus_kam::Result;

fn config_path() -> PathBuf {
    let arg = std::env::args().nth(1);
    match arg {
        Some(p) if Path::new(&p).exists() => PathBuf::from(p),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/torus2.json"),
    }
}

pub fn run() -> Result<()> {
    let cfg = ExperimentConfig::load(&config_path())?;
    let inst = cli::gen_instance(&cfg)?;
    println!("instance: n = {}, d = {}, initial order {}", inst.system.n(), inst.system.d(), inst.system.v_min());
    match cli::linearize(&cfg) {
        Ok((doc, report, _)) => {
            println!("status {}, defect {}", doc["status"], doc["verify"]["conjugacy_defect"]);
            print!("{}", report.to_csv());
        }
        Err((e, _)) => println!("failed with exit code {}: {e}", cli::exit_code(&e)),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
