fn main() {
    std::process::exit(qcmatch::cli::main_with_args(std::env::args_os()));
}
