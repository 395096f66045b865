fn main() {
    std::process::exit(wnet::cli::main());
}
