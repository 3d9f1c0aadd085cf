fn main() {
    std::process::exit(handstyle::cli::run(std::env::args_os()));
}
