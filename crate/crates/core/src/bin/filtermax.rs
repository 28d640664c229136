fn main() {
    std::process::exit(filtermax::cli::run_from(std::env::args_os()));
}
