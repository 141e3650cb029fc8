fn main() {
    std::process::exit(echofit::cli::run(std::env::args_os()));
}
