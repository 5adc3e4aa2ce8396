fn main() {
    std::process::exit(credence_cli::run_command(std::env::args()));
}
