fn main() {
    std::process::exit(acdkit::cli::main_with_args(std::env::args_os()));
}
