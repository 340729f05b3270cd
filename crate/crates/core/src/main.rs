fn main() {
    std::process::exit(pharmonic::cli::run_command(std::env::args_os()));
}
