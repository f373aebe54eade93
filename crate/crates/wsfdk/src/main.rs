fn main() {
    std::process::exit(wsfdk::cli::main_with_args(std::env::args_os()));
}
