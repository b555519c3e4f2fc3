fn main() {
    std::process::exit(kroncov_cli::run(std::env::args_os()));
}
