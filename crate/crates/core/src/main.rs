fn main() {
    std::process::exit(aggdiff::cli::run(std::env::args_os()));
}
