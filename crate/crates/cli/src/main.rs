fn main() -> std::process::ExitCode {
    brainsynth_cli::main()
}
