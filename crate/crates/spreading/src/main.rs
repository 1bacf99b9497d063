fn main() {
    std::process::exit(spreading::cli::main_from(std::env::args_os()));
}
