fn main() {
    std::process::exit(rev_euler_cli::main_with(std::env::args_os()));
}
