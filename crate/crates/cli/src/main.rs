fn main() {
    std::process::exit(tfde_cli::run_command(std::env::args_os()));
}
