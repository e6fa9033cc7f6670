fn main() {
    std::process::exit(hetpref::cli::run(std::env::args_os()));
}
