fn main() {
    std::process::exit(derivdepth::cli::main());
}
