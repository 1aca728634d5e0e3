fn main() {
    std::process::exit(litehybrid::cli::main_with_args(std::env::args_os()));
}
