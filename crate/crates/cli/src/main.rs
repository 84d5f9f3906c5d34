fn main() {
    std::process::exit(impulse_cli::main_with_args(std::env::args_os()));
}
