fn main() {
    std::process::exit(risk_eigen_cli::main_with_args(std::env::args_os()));
}
