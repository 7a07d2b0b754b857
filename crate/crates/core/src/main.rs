use clap::Parser;

fn main() {
    std::process::exit(nhsquare::cli::main_with(nhsquare::cli::Args::parse()));
}
