use clap::Parser;

fn main() {
    let cli = cgm_cli::Cli::parse();
    if let Err(e) = cgm_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
