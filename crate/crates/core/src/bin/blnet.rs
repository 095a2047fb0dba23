fn main() {
    std::process::exit(blnet::cli::main_with_args(std::env::args_os()));
}
