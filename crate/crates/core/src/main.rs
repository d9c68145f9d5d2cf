fn main() {
    std::process::exit(sumgp::cli::main_with_args(std::env::args_os()));
}
