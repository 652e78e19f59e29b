use clap::Parser;

fn main() {
    let cli = moebius_lab::commands::Cli::parse();
    std::process::exit(moebius_lab::commands::run(cli));
}
