fn main() {
    std::process::exit(qsta::run(std::env::args_os()));
}
