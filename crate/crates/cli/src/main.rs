fn main() {
    std::process::exit(multimind_cli::run(std::env::args_os()));
}
