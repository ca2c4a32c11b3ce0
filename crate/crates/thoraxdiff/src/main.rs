fn main() {
    std::process::exit(thoraxdiff::cli::run(std::env::args_os()));
}
