fn main() -> std::process::ExitCode {
    cylmimo::cli::main()
}
