fn main() -> std::process::ExitCode {
    covarlab::cli::main()
}
