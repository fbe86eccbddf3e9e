fn main() {
    std::process::exit(eegdnet::cli::run(std::env::args_os()));
}
