fn main() {
    std::process::exit(pacrnn_lab::cli::main(std::env::args_os()));
}
