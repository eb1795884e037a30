use clap::Parser;
use drmpc_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DRMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    std::process::exit(drmpc_cli::run(cli));
}
