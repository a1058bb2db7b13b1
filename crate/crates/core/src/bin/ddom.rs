fn main() -> std::process::ExitCode {
    ddom::cli::main()
}
