fn main() {
    std::process::exit(nids_cli::run());
}
