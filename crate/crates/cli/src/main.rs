fn main() {
    std::process::exit(tec_cli::dispatch(std::env::args_os()));
}
