fn main() {
    std::process::exit(ddmpc_core::cli::main_with_args(std::env::args_os()));
}
