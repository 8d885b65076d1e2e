fn main() {
    std::process::exit(giks::cli::run(std::env::args_os()));
}
