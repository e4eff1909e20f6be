//! Finite-difference check of both networks' analytic gradients.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use mft::checks::{check_networks, GradCheckSetup};

fn main() -> mft::Result<()> {
    let check = check_networks(&GradCheckSetup::default())?;
    print!("{}", check.to_text());
    if !check.passed() {
        std::process::exit(3);
    }
    Ok(())
}
