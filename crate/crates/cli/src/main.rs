fn main() -> std::process::ExitCode {
    gradtest_cli::main_with(std::env::args_os())
}
