fn main() {
    std::process::exit(gnnverify::cli::main_with_args(std::env::args_os()));
}
