fn main() {
    std::process::exit(rqamap::cli::run(std::env::args_os()));
}
