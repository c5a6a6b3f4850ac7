use clap::Parser;

fn main() {
    std::process::exit(phaselab_cli::run(phaselab_cli::Cli::parse()));
}
