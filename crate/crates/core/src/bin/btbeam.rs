fn main() {
    std::process::exit(btbeam::cli::run(std::env::args_os()));
}
