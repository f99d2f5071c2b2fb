fn main() {
    std::process::exit(berwald_cli::main_with_args(std::env::args_os()));
}
