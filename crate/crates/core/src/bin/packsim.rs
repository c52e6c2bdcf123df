fn main() {
    std::process::exit(packsim::harness::cli_run(std::env::args_os()));
}
