fn main() {
    std::process::exit(admal::cli::main_with_args(std::env::args_os()));
}
