fn main() {
    std::process::exit(toda_lab::cli::run(std::env::args_os()));
}
