fn main() {
    let code = mamba_bench::main_with(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
