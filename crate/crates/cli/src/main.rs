fn main() {
    std::process::exit(invmap_cli::run(std::env::args_os()));
}
