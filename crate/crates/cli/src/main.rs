use clap::Parser;

fn main() {
    let cli = twisted_cli::Cli::parse();
    if let Err(e) = twisted_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
