fn main() {
    std::process::exit(artikit::cli::run(std::env::args_os()));
}
