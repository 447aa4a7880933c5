fn main() {
    std::process::exit(crowd_cli::run(std::env::args_os()));
}
