fn main() {
    std::process::exit(nlvalve::cli::main_with_args(std::env::args_os()));
}
