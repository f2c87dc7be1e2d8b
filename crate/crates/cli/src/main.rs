fn main() {
    std::process::exit(furrow_cli::run_cli(std::env::args_os()));
}
