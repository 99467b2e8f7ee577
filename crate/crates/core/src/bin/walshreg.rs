fn main() {
    std::process::exit(walshreg::io::cli::run(std::env::args_os()));
}
