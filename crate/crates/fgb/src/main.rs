fn main() {
    std::process::exit(fgb::cli::main_with(std::env::args_os()));
}
