fn main() {
    std::process::exit(repheur::cli_main(std::env::args_os()));
}
