fn main() {
    std::process::exit(flexgrid::cli::run(std::env::args()));
}
