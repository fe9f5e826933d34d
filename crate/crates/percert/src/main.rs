fn main() {
    std::process::exit(percert::cli::cli_main(std::env::args().collect()));
}
