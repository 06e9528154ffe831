use clap::Parser;

use singlet_bell::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("singlet-bell: {e}");
        std::process::exit(e.exit_code());
    }
}
