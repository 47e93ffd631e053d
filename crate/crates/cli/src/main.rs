fn main() {
    std::process::exit(trajsim_cli::run(std::env::args_os()));
}
