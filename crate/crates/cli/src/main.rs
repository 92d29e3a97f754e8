fn main() {
    std::process::exit(expo_cli::run(std::env::args_os()));
}
