fn main() {
    std::process::exit(smlm_core::cli::main());
}
