fn main() {
    std::process::exit(airgrid::cli::run(std::env::args_os()));
}
