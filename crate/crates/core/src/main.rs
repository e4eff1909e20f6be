fn main() {
    mft::cli::init_logging();
    std::process::exit(mft::cli::run_from(std::env::args_os()));
}
