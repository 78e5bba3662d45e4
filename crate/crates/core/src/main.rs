fn main() {
    std::process::exit(presched::cli::run(std::env::args_os()));
}
