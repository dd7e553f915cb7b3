fn main() {
    std::process::exit(trapsim_cli::run_cli(std::env::args_os()));
}
