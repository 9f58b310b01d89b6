fn main() {
    std::process::exit(ggan::cli::run(std::env::args_os()));
}
