use clap::Parser;

fn main() -> anyhow::Result<()> {
    let cli = containalloc::cli::Cli::parse();
    containalloc::cli::execute(cli)
}
