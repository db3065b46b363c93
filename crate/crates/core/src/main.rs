fn main() {
    std::process::exit(steinmc::cli::run(std::env::args_os()));
}
