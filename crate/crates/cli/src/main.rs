use clap::Parser;

fn main() {
    let cli = delta_cli::Cli::parse();
    if let Err(e) = delta_cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
