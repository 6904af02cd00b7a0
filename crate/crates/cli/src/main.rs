fn main() {
    std::process::exit(apifk_cli::run_from(std::env::args_os()));
}
