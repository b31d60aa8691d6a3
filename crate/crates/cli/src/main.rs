fn main() {
    std::process::exit(mconvex_cli::main_with_args(std::env::args_os()));
}
