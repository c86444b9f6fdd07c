use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    wavediff::cli::run(wavediff::cli::Cli::parse())?;
    Ok(())
}
