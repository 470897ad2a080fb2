fn main() {
    std::process::exit(encore::cli::main_entry());
}
