fn main() {
    std::process::exit(bagclean::cli::run(std::env::args_os()));
}
