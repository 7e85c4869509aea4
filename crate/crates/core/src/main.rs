fn main() {
    let (code, output) = vrobust_core::cli::run(std::env::args_os());
    print!("{output}");
    std::process::exit(code);
}
