fn main() {
    std::process::exit(urabound::cli::main_with_args(std::env::args_os()));
}
