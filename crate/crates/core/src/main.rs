fn main() {
    std::process::exit(gcrl::cli::main_with(std::env::args_os()));
}
