use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sigmak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigmak")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn profile_csv(f: impl Fn(f64) -> (f64, f64, f64)) -> String {
    let mut s = String::from("r,w,dw,d2w\n");
    for i in (0..60).rev() {
        let r = 0.8f64.powi(i);
        let (w, d1, d2) = f(r);
        writeln!(s, "{r:e},{w:e},{d1:e},{d2:e}").unwrap();
    }
    s
}

fn grid_raw(nodes: usize, h: f64, f: impl Fn(f64, f64, f64) -> f64) -> String {
    let mut s = format!("dims 3\nshape {nodes} {nodes} {nodes}\nspacing {h:e}\n");
    let c = |i: usize| (i as f64 - (nodes as f64 - 1.0) / 2.0) * h;
    for i in 0..nodes {
        for j in 0..nodes {
            let row: Vec<String> = (0..nodes).map(|k| format!("{:e}", f(c(i), c(j), c(k)))).collect();
            s += &row.join(" ");
            s += "\n";
        }
    }
    s
}

#[test]
fn sigma_examples() {
    let o = sigmak(&["sigma", "--lambda", "1,1,1,1", "--k", "3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("sigma_3 = 4"));
    assert!(stdout(&o).contains("in Gamma_3: true"));

    let o = sigmak(&["sigma", "--lambda", "-1,1,1", "--k", "2"]);
    assert!(stdout(&o).contains("in Gamma_2: false"));

    let v = json(&sigmak(&["sigma", "--lambda", "1,2,3", "--k", "2", "--json"]));
    // σ_2(1,2,3) = 1·2 + 1·3 + 2·3
    assert_eq!(v["results"][0]["sigma"][1].as_f64().unwrap(), 11.0);
    assert_eq!(v["manifest"]["command"], "sigma");
}

#[test]
fn sigma_rejects_malformed_input() {
    assert_eq!(code(&sigmak(&["sigma", "--lambda", "1,oops", "--k", "2"])), 3);
    assert_eq!(code(&sigmak(&["sigma", "--lambda", "1,2", "--k", "3"])), 3);
    assert_eq!(code(&sigmak(&["sigma", "--k", "2"])), 3);
    assert_eq!(code(&sigmak(&["no-such-command"])), 3);
}

#[test]
fn sigma_reads_tuples_from_file() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "l.csv", "1,2,3\n# comment\n2,2,2\n");
    let v = json(&sigmak(&["sigma", "--csv", &p, "--k", "3", "--json"]));
    assert_eq!(v["results"][0]["sigma"][2].as_f64().unwrap(), 6.0);
    assert_eq!(v["results"][1]["sigma"][2].as_f64().unwrap(), 8.0);
    assert_eq!(v["manifest"]["inputs"][0].as_str().unwrap(), p);
}

#[test]
fn classify_dichotomy_and_rejection() {
    let dir = TempDir::new().unwrap();
    let fund = write(&dir, "f.csv", &profile_csv(|r| (2.0 * r.ln() + 5.0, 2.0 / r, -2.0 / (r * r))));
    let v = json(&sigmak(&["classify", &fund, "--n", "3", "--k", "2"]));
    assert_eq!(v["class"], "FUNDAMENTAL");
    assert!((v["offset"].as_f64().unwrap() - 5.0).abs() < 1e-9);

    // w' = r^{-θ}, θ = 1/2 for (3,2)
    let hold = write(&dir, "h.csv", &profile_csv(|r| (2.0 * r.sqrt(), 1.0 / r.sqrt(), -0.5 * r.powf(-1.5))));
    let v = json(&sigmak(&["classify", &hold, "--n", "3", "--k", "2"]));
    assert_eq!(v["class"], "HOLDER");
    assert!((v["alpha_est"].as_f64().unwrap() - 0.5).abs() < 0.01);

    let bad = write(&dir, "b.csv", &profile_csv(|r| (-r * r, -2.0 * r, -2.0)));
    let o = sigmak(&["classify", &bad, "--n", "3", "--k", "2"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("admissibility"));
}

#[test]
fn continue_reports_fold_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let problem = configs().join("scalar_n3k2p4.json");
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = sigmak(&["continue", "--problem", problem.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (json(&o), fs::read(out.join("branch.csv")).unwrap(), out)
    };
    let (v, csv_a, out) = run("a");
    // t(v) = (3/16) v²/(1 + v⁴) is maximal at v = 1
    assert!((v["t_star"].as_f64().unwrap() - 3.0 / 32.0).abs() < 1e-8);
    let text = String::from_utf8(csv_a.clone()).unwrap();
    assert!(text.starts_with("t,delta_t,v_at_probe,newton_iters,fold_flag\n"));
    assert_eq!(text.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 1);
    let saved: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
    assert_eq!(v["manifest"]["config"].as_str().unwrap(), problem.to_str().unwrap());
    assert_eq!(v["manifest"]["outputs"].as_array().unwrap().len(), 2);
    let (_, csv_b, _) = run("b");
    assert_eq!(csv_a, csv_b);
}

#[test]
fn volume_round_sphere_expansion() {
    let dir = TempDir::new().unwrap();
    let metric = configs().join("sphere_stereo_n3.json");
    let out = dir.path().join("v");
    let o = sigmak(&["volume", "--metric", metric.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let c2 = v["quadratic_coefficient"].as_f64().unwrap();
    assert!((c2 + 0.2).abs() < 0.01, "c2 = {c2}");
    assert_eq!(v["non_increasing"], true);
    let csv = fs::read_to_string(out.join("volume.csv")).unwrap();
    assert!(csv.starts_with("r,Q\n"));
    // Vol(B_s) on the unit 3-sphere is π(2s - sin 2s)
    let last = csv.lines().last().unwrap();
    let (s, q): (f64, f64) = {
        let mut it = last.split(',').map(|t| t.parse::<f64>().unwrap());
        (it.next().unwrap(), it.next().unwrap())
    };
    let exact = std::f64::consts::PI * (2.0 * s - (2.0 * s).sin()) / s.powi(3);
    assert!((q - exact).abs() < 1e-8 * exact);
}

#[test]
fn volume_end_count_of_inverted_fundamental() {
    let metric = configs().join("inverted_end_n3.json");
    let v = json(&sigmak(&["volume", "--metric", metric.to_str().unwrap()]));
    assert_eq!(v["end_count"]["m"], 1);
}

#[test]
fn solve_modes_and_exit_codes() {
    let eig = configs().join("eigen_n3k2.json");
    let v = json(&sigmak(&["solve", "--problem", eig.to_str().unwrap()]));
    assert_eq!(v["mode"], "eigenvalue");
    assert!((v["theta"].as_f64().unwrap() - 3.0 / 16.0).abs() < 1e-3 * 3.0 / 16.0);

    let dir = TempDir::new().unwrap();
    let ann = configs().join("annulus_zero_n3k2.json");
    let out = dir.path().join("s");
    let o = sigmak(&["solve", "--problem", ann.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("r,w,v,residual\n"));
    // the boundary data are those of 2 log r
    let h = 1.5 / 128.0;
    for line in csv.lines().skip(1) {
        let x: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        assert!((x[1] - 2.0 * x[0].ln()).abs() < 10.0 * h * h);
    }

    let ball = configs().join("ball_exp_n3k2.json");
    let w = json(&sigmak(&["solve", "--problem", ball.to_str().unwrap()]));
    assert_eq!(w["mode"], "w_gauge");
    assert!(w["residual_norm"].as_f64().unwrap() < 1e-9);

    let power = configs().join("ball_power_n3k2p4.json");
    let (ow, ov) = (dir.path().join("pw"), dir.path().join("pv"));
    for (g, o) in [("w", &ow), ("v", &ov)] {
        let r = sigmak(&["solve", "--problem", power.to_str().unwrap(), "--gauge", g, "--out", o.to_str().unwrap()]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let column = |p: &Path| -> Vec<f64> {
        let text = fs::read_to_string(p.join("solution.csv")).unwrap();
        text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
    };
    let (a, b) = (column(&ow), column(&ov));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
    assert_eq!(code(&sigmak(&["solve", "--problem", ball.to_str().unwrap(), "--gauge", "v"])), 3);

    let starved = write(
        &dir,
        "starved.json",
        &fs::read_to_string(&ball).unwrap().replace("\"N\": 128", "\"N\": 128, \"max_iter\": 1"),
    );
    assert_eq!(code(&sigmak(&["solve", "--problem", &starved])), 2);
    let broken = write(&dir, "broken.json", "{\"n\": 3}");
    assert_eq!(code(&sigmak(&["solve", "--problem", &broken])), 3);
    assert_eq!(code(&sigmak(&["solve", "--problem", "/definitely/missing.json"])), 3);
}

#[test]
fn envelope_pass_and_verification_failure() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "g.raw", &grid_raw(21, 0.1, |x, y, z| (0.3 + x * x + y * y + z * z).ln()));
    let out = dir.path().join("e");
    let o = sigmak(&["envelope", "--grid", &good, "--n", "3", "--k", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["check"]["passed"], true);
    assert!(fs::read_to_string(out.join("envelope.csv")).unwrap().starts_with("r,wtilde\n"));

    // sup over balls of a bounded bump with a sharp rise violates the
    // tangential inequality once w̃' is large
    let steep = write(&dir, "s.raw", &grid_raw(21, 0.05, |x, y, z| 40.0 * (x * x + y * y + z * z)));
    assert_eq!(code(&sigmak(&["envelope", "--grid", &steep, "--n", "3", "--k", "2"])), 1);
}

#[test]
fn harnack_from_radial_samples() {
    let dir = TempDir::new().unwrap();
    let mut s = String::from("r,chi\n");
    // χ = exp(-2·0.8 r^{1/2}/(1/2)) ⇒ sup log χ(0)/χ(r) / r^{1/2} = 3.2
    for i in 1..=100 {
        let r = i as f64 / 100.0;
        writeln!(s, "{r:e},{:e}", (-3.2 * r.sqrt()).exp()).unwrap();
    }
    let p = write(&dir, "chi.csv", &s);
    let v = json(&sigmak(&["harnack", "--chi", &p, "--n", "3", "--k", "2", "--origin", "1"]));
    assert!((v["c_est"].as_f64().unwrap() - 3.2).abs() < 1e-9);
    assert_eq!(code(&sigmak(&["harnack", "--n", "3", "--k", "2"])), 3);
}

#[test]
fn verify_seed_7_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let o = sigmak(&["verify", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("16 checks, 0 failed (seed 7)"));
    let saved: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(saved["manifest"]["seed"], 7);
    assert_eq!(saved["passed"], true);
}
