fn main() {
    std::process::exit(spanreason::cli::run(std::env::args_os()));
}
