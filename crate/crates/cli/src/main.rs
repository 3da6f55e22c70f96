fn main() {
    std::process::exit(lpmbrw_cli::run_from(std::env::args_os()));
}
