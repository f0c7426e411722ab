fn main() {
    std::process::exit(panza_cli::run(std::env::args_os()));
}
