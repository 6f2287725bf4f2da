fn main() {
    std::process::exit(actobj::cli::main_with_args(std::env::args_os()));
}
