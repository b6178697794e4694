fn main() {
    std::process::exit(twowell::cli::main_with_args(std::env::args_os()));
}
