fn main() {
    std::process::exit(helfrich_cli::main_with_args(std::env::args_os()));
}
