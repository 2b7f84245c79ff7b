fn main() {
    std::process::exit(eitsim::cli::main_with(std::env::args_os()));
}
