fn main() {
    std::process::exit(cryptompress::cli::main());
}
