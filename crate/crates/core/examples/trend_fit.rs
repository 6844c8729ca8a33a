//! Fits log2(count) over size and extrapolates to a large round.
//!
//!     cargo run --release --example trend_fit

use cjmap::enumerate::EnumerationOptions;
use cjmap::fit::{fit_trend, Aggregate};
use cjmap::generator::{trend_dataset, GeneratorParams};
use cjmap::model::Design;

fn main() -> cjmap::error::Result<()> {
    let sizes: Vec<usize> = (6..=14).collect();
    let rows = trend_dataset(Design::Generic, &sizes, 50, 1, &GeneratorParams::default(), &EnumerationOptions::default())?;
    let fit = fit_trend(&rows, Aggregate::SizeMean)?;
    println!("log2(count) = {:.4} * size + {:.4}  (R^2 {:.3})", fit.slope, fit.intercept, fit.r_squared);
    for loss in [0.0, 0.2, 0.4] {
        let p = fit.predict(400.0, loss)?;
        println!("size 400, loss {loss:.1}: effective {:.0}, ~2^{:.0} mappings", p.effective_size, p.log2_count);
    }
    Ok(())
}
