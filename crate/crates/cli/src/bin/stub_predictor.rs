fn main() -> std::process::ExitCode {
    brainsynth_cli::stub_predictor::main()
}
