fn main() {
    std::process::exit(delayshare::cli::main_with_args(std::env::args_os()));
}
