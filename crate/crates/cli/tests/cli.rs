use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOPOLOGY: &str = "\
# diamond with one dead link
node A
node B
node C
node D
link A B loss_db=3.4 length_km=20 tx_qubits=25 rx_qubits=25
link B D loss_db=4.3 length_km=20 tx_qubits=25 rx_qubits=25
link A C loss_db=3.7 length_km=20 tx_qubits=25 rx_qubits=25
link C D loss_db=3.7 length_km=20 tx_qubits=25 rx_qubits=25
link D A loss_db=6.0 length_km=20 tx_qubits=25 rx_qubits=25
";

const PATH_SET: &str = "\
class S loss_db=3.4 length_km=20 tx_qubits=25 rx_qubits=25
class P loss_db=4.3 length_km=20 tx_qubits=25 rx_qubits=25
SS
SP
PPS
";

fn qrsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrsim"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn calibrate_then_route() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("net.txt");
    let cal = dir.path().join("cal.csv");
    fs::write(&topo, TOPOLOGY).unwrap();

    let o = qrsim(&["calibrate", "--topology", p(&topo), "--seeds", "2", "--teleports", "40", "--out", p(&cal)]);
    stdout(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("D-A"));
    let csv = fs::read_to_string(&cal).unwrap();
    assert!(csv.starts_with("link,loss_db,pulse_pt,meas_pt,throughput,bellgent_s"));
    assert_eq!(csv.lines().count(), 5);

    let out = stdout(&qrsim(&[
        "route", "--topology", p(&topo), "--calibration", p(&cal), "--metric", "bellgent", "--from", "A", "--to", "D",
    ]));
    assert!(out.contains("path: A-C-D"), "{out}");

    let out = stdout(&qrsim(&["route", "--topology", p(&topo), "--metric", "loss", "--from", "A", "--to", "D"]));
    assert!(out.contains("cost_loss: 7.4"), "{out}");
}

#[test]
fn route_errors() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("net.txt");
    fs::write(&topo, TOPOLOGY).unwrap();
    let o = qrsim(&["route", "--topology", p(&topo), "--metric", "meas", "--from", "A", "--to", "D"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--calibration"));
    let o = qrsim(&["route", "--topology", p(&topo), "--metric", "hops", "--from", "A", "--to", "D"]);
    assert!(!o.status.success());
    let o = qrsim(&["route", "--topology", p(&topo), "--metric", "loss", "--from", "D", "--to", "Z"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_path_by_nodes_and_composition() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("net.txt");
    fs::write(&topo, TOPOLOGY).unwrap();
    let a = stdout(&qrsim(&["simulate-path", "--topology", p(&topo), "--nodes", "A,C,D", "--teleports", "30"]));
    assert!(a.contains("status: ok") && a.contains("deliveries: 30"), "{a}");
    let b = stdout(&qrsim(&["simulate-path", "--topology", p(&topo), "--nodes", "A,C,D", "--teleports", "30"]));
    assert_eq!(a, b);

    let c = stdout(&qrsim(&["simulate-path", "--builtin", "four-hop", "--composition", "SSGS", "--teleports", "20"]));
    assert!(c.contains("path: n0-n1-n2-n3-n4"), "{c}");
    let o = qrsim(&["simulate-path", "--topology", p(&topo), "--nodes", "A,D"]);
    assert!(!o.status.success());
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.txt");
    let out = dir.path().join("sweep.csv");
    fs::write(&set, PATH_SET).unwrap();
    let args = ["sweep", "--path-set", p(&set), "--seeds", "2", "--teleports", "30", "--out", p(&out)];
    stdout(&qrsim(&args));
    let first = fs::read_to_string(&out).unwrap();
    assert!(first.starts_with(
        "composition,hops,cost_loss,cost_invtrans,cost_pulse,cost_meas,cost_bellgent,throughput,throughput_sd,pulses,measurements,status\n"
    ));
    assert_eq!(first.lines().count(), 4);
    stdout(&qrsim(&args));
    assert_eq!(fs::read_to_string(&out).unwrap(), first);

    let r = stdout(&qrsim(&["report", "--sweep", p(&out)]));
    assert!(r.contains("paths: 3 (3 ok)"), "{r}");
    assert_eq!(r.lines().filter(|l| l.contains("r2_measurements=")).count(), 5);
    let r = stdout(&qrsim(&["report", "--sweep", p(&out), "--metric", "bellgent"]));
    assert!(r.contains("bellgent: ") && r.contains("pairs=3"), "{r}");
}

#[test]
fn bad_parameters_are_rejected() {
    for args in [
        ["simulate-path", "--builtin", "four-hop", "--composition", "SSSS", "--target-fidelity", "1.5"],
        ["simulate-path", "--builtin", "four-hop", "--composition", "SSSS", "--p-ent", "0"],
        ["simulate-path", "--builtin", "four-hop", "--composition", "SXSS", "--teleports", "5"],
    ] {
        assert!(!qrsim(&args).status.success(), "{args:?}");
    }
}
