use std::process::exit;

fn main() {
    exit(gnids_core::cli::run_cli(std::env::args()));
}
