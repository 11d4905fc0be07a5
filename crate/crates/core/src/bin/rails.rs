fn main() {
    std::process::exit(rails::cli::run(std::env::args_os()));
}
