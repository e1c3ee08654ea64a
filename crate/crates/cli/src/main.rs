fn main() {
    std::process::exit(acdnet_cli::main_with_args(std::env::args_os()));
}
