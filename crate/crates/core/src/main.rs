fn main() {
    std::process::exit(kingcode::cli::run());
}
