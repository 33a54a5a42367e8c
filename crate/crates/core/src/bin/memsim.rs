fn main() {
    std::process::exit(memsim::cli::run(std::env::args_os()));
}
