fn main() {
    std::process::exit(prefscore::cli::main());
}
