fn main() {
    std::process::exit(euler_sieve::cli::main_with_args(std::env::args_os()));
}
