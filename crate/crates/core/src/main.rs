fn main() {
    std::process::exit(hscore::cli::dispatch(std::env::args_os()));
}
