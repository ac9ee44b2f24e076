fn main() {
    std::process::exit(kaclab_cli::run(std::env::args_os()));
}
