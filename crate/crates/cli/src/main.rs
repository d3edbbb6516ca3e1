fn main() {
    std::process::exit(wavehax_cli::run(std::env::args_os()));
}
