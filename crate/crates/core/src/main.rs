fn main() {
    std::process::exit(martcheck::cli::run(std::env::args_os()));
}
