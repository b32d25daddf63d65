fn main() {
    std::process::exit(neurogen::cli::main());
}
