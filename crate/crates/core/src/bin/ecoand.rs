fn main() {
    std::process::exit(ecoand::cli::main_with_args(std::env::args_os()));
}
