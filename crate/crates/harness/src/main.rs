use clap::Parser;

fn main() {
    let cli = minimax_harness::cli::Cli::parse();
    if let Err(e) = minimax_harness::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
