fn main() {
    std::process::exit(crowdlab::cli::main_with_args(std::env::args_os()));
}
