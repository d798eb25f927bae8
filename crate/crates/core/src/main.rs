fn main() -> std::process::ExitCode {
    pave_core::cli::main()
}
