fn main() {
    std::process::exit(kotz_tails::cli::run(std::env::args_os()));
}
