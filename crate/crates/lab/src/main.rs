fn main() {
    std::process::exit(perpetual_lab::cli::run(std::env::args_os()));
}
