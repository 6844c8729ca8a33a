//! Entropy, link probabilities and a weighted distribution.

use cjmap::enumerate::{enumerate, Constraints, EnumerationOptions};
use cjmap::metrics::{entropy, link_probability, mapping_distribution, max_link, WeightTable};
use cjmap::model::{Coinjoin, Design};
use cjmap::preprocess::{FeePolicy, NormalizedCoinjoin};

fn main() -> cjmap::error::Result<()> {
    let tx = Coinjoin::from_values("m", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
    let ntx = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
    let res = enumerate(&ntx, &Constraints::default(), &EnumerationOptions::default())?;

    let uniform = mapping_distribution(&res, None)?;
    println!("H = {:.4} bits", entropy(&uniform));
    let links = link_probability(&res, &uniform);
    print!("{:>4}", "");
    for o in &links.outputs {
        print!("{o:>6}");
    }
    println!();
    for (i, row) in links.inputs.iter().zip(&links.p) {
        print!("{i:>4}");
        for p in row {
            print!("{p:>6.3}");
        }
        println!();
    }
    let user = ["i2".to_string(), "i3".to_string()];
    println!("max link {{i2,i3}} -> o2: {:.3}", max_link(&links, &user, "o2")?);

    // Users rarely pay 3 + 3 into a single 6.
    let mut w = WeightTable::default();
    w.set(&[3, 3], &[6], 0.1);
    let weighted = mapping_distribution(&res, Some(&w))?;
    println!("weighted H = {:.4} bits", entropy(&weighted));
    Ok(())
}
