use clap::Parser;

mod cli;

/// Die quietly like other unix filters when a pipe closes early, instead of
/// panicking on EPIPE mid-table.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() {
    reset_sigpipe();
    let args = match cli::Cli::try_parse() {
        Ok(args) => args,
        // clap prints usage/help itself: exit 2 for usage errors, 0 for
        // --help and --version.
        Err(e) => e.exit(),
    };
    if let Err(e) = cli::dispatch(args) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
