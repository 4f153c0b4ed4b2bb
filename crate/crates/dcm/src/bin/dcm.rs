fn main() -> std::process::ExitCode {
    dcm::cli::main()
}
