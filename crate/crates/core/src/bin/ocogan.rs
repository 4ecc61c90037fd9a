fn main() {
    std::process::exit(ocogan::cli::main_with_args(std::env::args_os()));
}
