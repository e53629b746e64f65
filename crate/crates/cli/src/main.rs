use clap::Parser;

fn main() {
    let cli = gpx_cli::Cli::parse();
    if let Err(e) = gpx_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(gpx_cli::exit_code(&e));
    }
}
