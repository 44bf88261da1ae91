fn main() {
    std::process::exit(inflap_fb::cli::run_from_args(std::env::args_os()));
}
