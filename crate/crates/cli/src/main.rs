fn main() {
    std::process::exit(lsam_cli::run(std::env::args_os()));
}
