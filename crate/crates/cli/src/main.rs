fn main() {
    std::process::exit(xmold_cli::run(std::env::args_os()));
}
