use clap::Parser;
use podwind::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => log::info!("wrote {}", manifest.display()),
        Err(e) => {
            eprintln!("podwind: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
