use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualpert")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn gen(out: &Path, seed: &str) -> Output {
    run(&["gen-data", "--seed", seed, "--out", out.to_str().unwrap(), "--set", "samples=60"])
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["eval", "--set", "novalue"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn unknown_keys_and_missing_data_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--set", "flavour=mint"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("flavour"));
    let missing = dir.path().join("nowhere");
    let o = run(&["sweep", "--set", &format!("data={}", missing.display()), "--set", "model=m.dpt"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(missing.to_str().unwrap()), "{}", stderr(&o));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, c) = (dir.path().join("a"), dir.path().join("c"));
    let files = ["train/images.dpt", "train/labels.dpt", "train/masks.dpt", "test/images.dpt", "meta.txt"];
    assert_eq!(code(&gen(&a, "7")), 0);
    let first: Vec<Vec<u8>> = files.iter().map(|f| read(&a.join(f))).collect();
    assert_eq!(code(&gen(&a, "7")), 0);
    for (f, bytes) in files.iter().zip(&first) {
        assert!(read(&a.join(f)) == *bytes, "{f} changed on rerun");
    }
    assert_eq!(code(&gen(&c, "8")), 0);
    assert!(read(&a.join("train/images.dpt")) != read(&c.join("train/images.dpt")));
}

#[test]
fn train_eval_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&gen(&data, "1")), 0);
    let model_dir = dir.path().join("model");
    let d = format!("data={}", data.display());
    let o = run(&[
        "train", "--out", model_dir.to_str().unwrap(), "--set", &d, "--set", "epochs=1", "--set", "batch_size=16",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = String::from_utf8(read(&model_dir.join("train_log.csv"))).unwrap();
    assert!(log.lines().any(|l| l == "epoch,loss,clean_acc"));

    let m = format!("model={}", model_dir.join("model.dpt").display());
    let tuned = dir.path().join("tuned");
    let init = format!("init_model={}", model_dir.join("model.dpt").display());
    let o = run(&[
        "train", "--out", tuned.to_str().unwrap(), "--set", &d, "--set", &init, "--set", "epochs=1",
        "--set", "attack=pgd", "--set", "steps=2", "--set", "ramp_epochs=1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read(&tuned.join("model.dpt")) != read(&model_dir.join("model.dpt")));
    let o = run(&["train", "--out", tuned.to_str().unwrap(), "--set", &d, "--set", "init_model=/no/such/model.dpt"]);
    assert_eq!(code(&o), 2);
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "# budgets\naxis = eps\nvalues = 0, 0.25\nsteps = 2\nlimit = 6\n").unwrap();
    let mut outputs = Vec::new();
    let out = dir.path().join("sweep");
    for _ in 0..2 {
        let o = run(&[
            "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--set", &d, "--set", &m,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push(String::from_utf8(read(&out.join("sweep.csv"))).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = &outputs[0];
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], dualpert::eval::METRICS_HEADER);
    assert_eq!(body.len(), 3);

    let out = dir.path().join("viz");
    let o = run(&["gradviz", "--out", out.to_str().unwrap(), "--set", &d, "--set", &m, "--set", "count=2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("gradviz.csv").exists());

    let wrong = run(&["eval", "--set", &d, "--set", "model=/definitely/not/here.dpt"]);
    assert_eq!(code(&wrong), 2);
}
