fn main() {
    std::process::exit(problin::cli::run());
}
