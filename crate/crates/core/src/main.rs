fn main() {
    std::process::exit(haagerup_lab::cli::run(std::env::args_os()));
}
