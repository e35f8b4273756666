fn main() {
    std::process::exit(gaitlab_cli::run(std::env::args()));
}
