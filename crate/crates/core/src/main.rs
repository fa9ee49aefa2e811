fn main() {
    std::process::exit(xadapt::cli::main());
}
