fn main() {
    std::process::exit(stsperf::cli::run_cli(std::env::args_os()));
}
