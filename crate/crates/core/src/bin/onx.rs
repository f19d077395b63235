fn main() {
    std::process::exit(onx::cli::run());
}
