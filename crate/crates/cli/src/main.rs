use clap::Parser;
use splat2twin_cli::{run, thread_count_from_env, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match thread_count_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        Ok(None) => {}
        Err(e) => {
            log::error!("{e}");
            std::process::exit(e.exit_code());
        }
    }
    std::process::exit(run(cli));
}
