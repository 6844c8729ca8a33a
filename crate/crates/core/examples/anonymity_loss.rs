//! Post-mix consolidation of two outputs of the same coinjoin.

use cjmap::anonloss::{compute_loss, BucketScheme, GraphInput, GraphOutput, GraphTx, Horizon, TxGraph};
use cjmap::model::Design;

fn spend(txid: &str, vout: u32) -> GraphInput {
    GraphInput {
        txid: txid.into(),
        vout,
        address: None,
    }
}

fn output(value: i64) -> GraphOutput {
    GraphOutput { value, address: None }
}

fn main() -> cjmap::error::Result<()> {
    let day = 86_400;
    let g = TxGraph {
        transactions: vec![
            GraphTx {
                txid: "cj".into(),
                timestamp: 0,
                height: None,
                inputs: vec![spend("a", 0), spend("b", 0), spend("c", 0)],
                outputs: vec![output(5_000_000), output(5_000_000), output(5_000_000), output(1_310_720)],
            },
            GraphTx {
                txid: "merge".into(),
                timestamp: 3 * day,
                height: None,
                inputs: vec![spend("cj", 0), spend("cj", 1)],
                outputs: vec![output(9_990_000)],
            },
        ],
        coinjoin_ids: ["cj".to_string()].into(),
    };
    let horizons = [Horizon::Days(1), Horizon::Days(7), Horizon::Infinite];
    let report = compute_loss(&g, &horizons, &BucketScheme::for_design(Design::Wasabi2))?;
    println!("{}", cjmap::io::to_json(&report)?);
    Ok(())
}
