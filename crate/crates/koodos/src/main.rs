fn main() -> std::process::ExitCode {
    koodos::cli::main_entry()
}
