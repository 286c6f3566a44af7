fn main() {
    std::process::exit(msle::cli::run());
}
