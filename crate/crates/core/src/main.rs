fn main() -> std::process::ExitCode {
    evacnet::cli::main_exit()
}
