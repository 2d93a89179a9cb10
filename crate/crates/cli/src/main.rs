fn main() {
    std::process::exit(synres_cli::run(std::env::args_os()));
}
