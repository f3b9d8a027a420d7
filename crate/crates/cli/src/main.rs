use permclear_cli::{run_from_args, Streams};

fn main() {
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    let code = run_from_args(
        std::env::args_os(),
        &mut Streams {
            stdout: &mut stdout,
            stderr: &mut stderr,
        },
    );
    std::process::exit(code);
}
