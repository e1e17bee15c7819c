fn main() {
    std::process::exit(natver::cli::main());
}
