fn main() {
    std::process::exit(evocell::cli::run_cli());
}
