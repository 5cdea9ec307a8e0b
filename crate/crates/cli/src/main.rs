fn main() {
    std::process::exit(kdswitch_cli::main_with_args(std::env::args_os()));
}
