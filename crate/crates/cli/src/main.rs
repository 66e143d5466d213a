use std::process::ExitCode;

fn main() -> ExitCode {
    // Exit quietly when stdout is closed early, e.g. piped into `head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    ExitCode::from(tooldse_cli::run(std::env::args_os()))
}
