fn main() -> std::process::ExitCode {
    krflow_cli::main_exit()
}
