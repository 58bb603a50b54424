fn main() {
    std::process::exit(qsimpute::cli::run(std::env::args_os()));
}
