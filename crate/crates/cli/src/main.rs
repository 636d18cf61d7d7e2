fn main() {
    std::process::exit(orgsim_cli::run_cli(std::env::args_os()));
}
