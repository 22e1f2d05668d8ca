fn main() -> std::process::ExitCode {
    chlab::cli::main()
}
