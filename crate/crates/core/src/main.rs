fn main() {
    delay_stab::cli::init_threads();
    std::process::exit(delay_stab::cli::run(std::env::args_os()));
}
