fn main() {
    std::process::exit(armour::cli::dispatch(std::env::args_os()));
}
