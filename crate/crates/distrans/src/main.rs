fn main() {
    std::process::exit(distrans::cli::run(std::env::args_os()));
}
