fn main() {
    std::process::exit(fscap::cli::run(std::env::args_os()));
}
