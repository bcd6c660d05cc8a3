fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = scc_cli::run(std::env::args_os(), &mut out) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
