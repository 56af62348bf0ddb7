fn main() {
    std::process::exit(stampid::cli::run(std::env::args_os()));
}
