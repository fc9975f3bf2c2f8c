fn main() {
    std::process::exit(pcc::cli::run());
}
