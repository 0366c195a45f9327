fn main() -> std::process::ExitCode {
    factored_raptor::cli::main()
}
