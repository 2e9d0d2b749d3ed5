use clap::Parser;
use log::{Level, LevelFilter, Log, Metadata, Record};
use torus_kam::cli::{self, Cli};

struct Stderr;

impl Log for Stderr {
    fn enabled(&self, m: &Metadata) -> bool {
        m.level() <= log::max_level()
    }

    fn log(&self, r: &Record) {
        if self.enabled(r.metadata()) {
            eprintln!("[{}] {}", r.level().as_str().to_lowercase(), r.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: Stderr = Stderr;

fn main() {
    let args = Cli::parse();
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(if args.common.quiet { LevelFilter::Error } else { Level::Info.to_level_filter() });
    std::process::exit(cli::execute(&args).code);
}
