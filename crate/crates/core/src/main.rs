use clap::Parser;

fn main() {
    let cli = mixlab::cli::Cli::parse();
    std::process::exit(mixlab::cli::run(&cli));
}
