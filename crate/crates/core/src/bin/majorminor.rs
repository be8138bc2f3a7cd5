fn main() {
    std::process::exit(majorminor::cli::main());
}
