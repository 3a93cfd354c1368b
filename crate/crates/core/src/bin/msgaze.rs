fn main() {
    std::process::exit(msgaze::cli::run(std::env::args_os().collect()));
}
