fn main() {
    std::process::exit(amacer::cli::dispatch(std::env::args_os()));
}
