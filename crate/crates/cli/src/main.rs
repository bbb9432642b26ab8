fn main() {
    std::process::exit(sdiq_cli::cli::run(std::env::args_os()));
}
