fn main() {
    std::process::exit(mts_cli::run(std::env::args_os()));
}
