fn main() {
    std::process::exit(reln::cli::run(std::env::args_os()));
}
