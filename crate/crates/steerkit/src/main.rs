fn main() {
    std::process::exit(steerkit::cli::run());
}
