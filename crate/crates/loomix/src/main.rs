fn main() {
    std::process::exit(loomix::cli::main_from_args(std::env::args_os()));
}
