use clap::Parser;
use gwr_cli::{configure_threads, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| run(cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
