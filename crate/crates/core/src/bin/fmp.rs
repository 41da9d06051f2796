fn main() {
    std::process::exit(fmp::cli::main());
}
