fn main() {
    std::process::exit(socest::cli::main(std::env::args_os()));
}
