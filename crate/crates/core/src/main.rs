fn main() {
    std::process::exit(imputebench::harness::cli::main_with_args(
        std::env::args_os(),
    ));
}
