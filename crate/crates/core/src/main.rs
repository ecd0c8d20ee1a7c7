fn main() {
    std::process::exit(rpsolve::cli::run(std::env::args_os()));
}
