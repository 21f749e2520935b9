use clap::Parser;

fn main() {
    let cli = tasktree::cli::Cli::parse();
    std::process::exit(tasktree::cli::run(cli));
}
