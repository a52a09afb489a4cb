fn main() {
    std::process::exit(sg_lab::cli::main_with_args(std::env::args_os()));
}
