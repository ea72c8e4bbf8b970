use clap::Parser;

fn main() {
    let cli = pisnn::cli::Cli::parse();
    std::process::exit(pisnn::cli::run(cli));
}
