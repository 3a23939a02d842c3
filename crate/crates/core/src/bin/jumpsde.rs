fn main() {
    std::process::exit(jumpsde::cli::run(std::env::args_os()));
}
