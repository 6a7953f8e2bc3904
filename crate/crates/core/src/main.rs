fn main() {
    std::process::exit(goalrec::cli::run_command(std::env::args_os()));
}
