fn main() {
    std::process::exit(mpvc::main_cli(std::env::args_os()));
}
