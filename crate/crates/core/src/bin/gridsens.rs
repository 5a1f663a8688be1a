fn main() {
    std::process::exit(gridsens::cli::run_from(std::env::args_os()));
}
