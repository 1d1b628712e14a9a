fn main() {
    std::process::exit(sqpbs::cli::main_with_args(std::env::args_os()));
}
