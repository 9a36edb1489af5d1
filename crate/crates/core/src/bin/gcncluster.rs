fn main() {
    std::process::exit(gcncluster::cli::run(std::env::args_os()));
}
