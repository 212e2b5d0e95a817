//! Records results by hand in an on-disk store, then exports and re-imports.

use oed::archive;
use oed::config::RunConfig;
use oed::optimizer::Source;
use oed::problem::{Design, ObjectiveSpec, Problem, Value, VariableSpec};
use oed::store::Store;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path().join("experiments")).unwrap();
    let problem = Problem::new(
        vec![VariableSpec::continuous("ph", 4.0, 9.0), VariableSpec::binary("buffered")],
        vec![ObjectiveSpec::maximize("activity"), ObjectiveSpec::minimize("impurity")],
    );
    let exp = store.create_experiment("enzyme", problem, RunConfig::default()).unwrap();

    let designs: Vec<Design> = [5.0, 6.5, 8.0]
        .iter()
        .map(|&ph| Design::new().with("ph", Value::Real(ph)).with("buffered", Value::Bool(ph > 6.0)))
        .collect();
    exp.insert_pending(&designs, Source::Manual, 1, "alice").unwrap();

    let first = exp.claim_next("bench-2", "bob").unwrap().unwrap();
    exp.complete(first.id, vec![0.71, 0.04], "clear solution", "bob").unwrap();
    let second = exp.claim_next("bench-2", "bob").unwrap().unwrap();
    exp.fail(second.id, "precipitate formed", "bob").unwrap();

    print!("{}", archive::records_csv(exp.problem(), &exp.all_records()).unwrap());
    println!("{} log entries", exp.log().len());

    let out = dir.path().join("enzyme-export");
    exp.export(&out).unwrap();
    for entry in std::fs::read_dir(&out).unwrap() {
        println!("exported {}", entry.unwrap().file_name().to_string_lossy());
    }
    let copy = store.import(&out, Some("enzyme-copy")).unwrap();
    println!("import identical: {}", archive::identical(&exp.all_records(), &copy.all_records()));
    println!("experiments: {:?}", store.list().unwrap());
}
