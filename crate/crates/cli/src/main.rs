fn main() {
    std::process::exit(littlemix_cli::main_with_args(std::env::args_os()));
}
