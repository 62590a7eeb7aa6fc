fn main() {
    std::process::exit(riskla::cli::main_with_args(std::env::args_os()));
}
