use clap::Parser;
use voxcolor_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Err(e) = run(cli) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}
