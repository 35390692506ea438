fn main() {
    std::process::exit(liri::cli::cli_main(std::env::args()));
}
