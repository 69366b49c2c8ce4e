fn main() {
    std::process::exit(solver_forge_cli::run(std::env::args_os()));
}
