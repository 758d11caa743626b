use clap::Parser;

fn main() -> anyhow::Result<()> {
    transmtt::run(transmtt::Cli::parse())
}
