fn main() {
    std::process::exit(llg_control::cli::run(std::env::args_os()));
}
