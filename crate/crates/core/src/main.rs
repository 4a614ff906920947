fn main() {
    std::process::exit(steinclt::cli::main());
}
