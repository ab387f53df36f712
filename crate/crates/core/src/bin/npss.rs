fn main() {
    std::process::exit(npss::cli::main_with_args(std::env::args_os()));
}
