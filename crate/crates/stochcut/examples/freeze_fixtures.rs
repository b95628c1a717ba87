//! Prints the oracle records of every named fixture; the output is
//! frozen in fixtures/oracle.json.

fn main() {
    let recs: Vec<_> = stochcut::fixtures::names()
        .iter()
        .map(|n| stochcut::oracle::fixture_record(n, 7).unwrap())
        .collect();
    println!("{}", serde_json::to_string_pretty(&recs).unwrap());
}
