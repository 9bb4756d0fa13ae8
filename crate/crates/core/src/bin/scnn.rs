fn main() {
    std::process::exit(scnn::cli::run(std::env::args_os()));
}
