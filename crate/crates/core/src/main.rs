fn main() {
    std::process::exit(mimebench::cli::main_with_args(std::env::args_os()));
}
