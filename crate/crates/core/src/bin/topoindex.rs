use clap::Parser;
use topoindex::cli;

fn main() {
    let args = cli::Cli::parse();
    std::process::exit(cli::main_with_args(args));
}
