fn main() {
    std::process::exit(stackevo::cli::run_cli());
}
