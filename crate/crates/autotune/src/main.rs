fn main() {
    std::process::exit(autotune::cli::run_main());
}
