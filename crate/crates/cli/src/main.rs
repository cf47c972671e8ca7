use clap::Parser;

fn main() {
    std::process::exit(randprod_cli::run(randprod_cli::Cli::parse()));
}
