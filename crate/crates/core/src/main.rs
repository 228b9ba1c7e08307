fn main() {
    std::process::exit(relcp::cli::run(std::env::args_os()));
}
