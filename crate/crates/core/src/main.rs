fn main() {
    std::process::exit(hillspec::cli_io::main_with_args(std::env::args_os()));
}
