mod cli;

use clap::Parser;

fn main() {
    let args = cli::Cli::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = cli::run(args) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
