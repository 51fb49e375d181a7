fn main() {
    std::process::exit(igabem::cli::main_with_args(std::env::args_os()));
}
