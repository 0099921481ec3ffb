fn main() {
    std::process::exit(ffdreg::cli::main_with_args(std::env::args_os()));
}
