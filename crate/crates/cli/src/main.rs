fn main() {
    std::process::exit(hopf_hj_cli::main_with_args(std::env::args_os()));
}
