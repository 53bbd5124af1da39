fn main() {
    std::process::exit(eigedge_cli::run(std::env::args_os()));
}
