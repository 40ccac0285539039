fn main() {
    std::process::exit(tipping_kit::cli::main_from(std::env::args_os()));
}
