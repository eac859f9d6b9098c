fn main() {
    std::process::exit(retgen_cli::run(std::env::args_os()));
}
