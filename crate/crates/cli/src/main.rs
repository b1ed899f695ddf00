fn main() {
    std::process::exit(qdgf_cli::main_with(std::env::args_os()));
}
