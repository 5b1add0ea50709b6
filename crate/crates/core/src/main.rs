use clap::Parser;

fn main() {
    let args = fracweyl::cli::Args::parse();
    std::process::exit(fracweyl::cli::main_with_args(args));
}
