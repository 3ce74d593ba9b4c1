#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn parlens(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parlens"))
        .args(args)
        .env("PARLENS_SEED", seed)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn parlens")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every command with its primary outputs: stdout plus any files written.
pub struct Invocation {
    pub name: &'static str,
    pub args: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

/// One invocation per command, writing into `dir`. Commands that read CSV
/// consume `sweep.csv`, so run them in order.
pub fn every_command(dir: &Path) -> Vec<Invocation> {
    let d = |rel: &str| data(rel).to_str().unwrap().to_string();
    let o = |name: &str| dir.join(name);
    let s = |p: PathBuf| p.to_str().unwrap().to_string();
    vec![
        Invocation {
            name: "analyze",
            args: vec![
                "analyze".into(),
                "--layout".into(),
                d("layouts/open5.txt"),
                "--task".into(),
                d("tasks/onion_soup.json"),
                "--graph-out".into(),
                s(o("graph.json")),
            ],
            outputs: vec![o("graph.json")],
        },
        Invocation {
            name: "predict",
            args: vec![
                "predict".into(),
                "--layout".into(),
                d("layouts/dividers.txt"),
                "--task".into(),
                d("tasks/onion_soup.json"),
                "--agents".into(),
                "3".into(),
            ],
            outputs: vec![],
        },
        Invocation {
            name: "si",
            args: vec!["si".into(), "--log".into(), d("logs/two_agents.csv")],
            outputs: vec![],
        },
        Invocation {
            name: "simulate",
            args: vec!["simulate".into(), "--spec".into(), d("sims/bottleneck.json"), "--compare".into()],
            outputs: vec![],
        },
        Invocation {
            name: "learn",
            args: vec![
                "learn".into(),
                "--spec".into(),
                d("sweeps/learn_small.json"),
                "--out".into(),
                s(o("learn.csv")),
            ],
            outputs: vec![o("learn.csv")],
        },
        Invocation {
            name: "sweep",
            args: vec!["sweep".into(), "--spec".into(), d("sweeps/mixed.json"), "--out".into(), s(o("sweep.csv"))],
            outputs: vec![o("sweep.csv")],
        },
        Invocation {
            name: "stats",
            args: vec![
                "stats".into(),
                "--csv".into(),
                s(o("sweep.csv")),
                "--x".into(),
                "S,N".into(),
                "--y".into(),
                "si".into(),
                "--logistic".into(),
            ],
            outputs: vec![],
        },
        Invocation {
            name: "plot",
            args: vec![
                "plot".into(),
                "--csv".into(),
                s(o("sweep.csv")),
                "--x".into(),
                "S".into(),
                "--y".into(),
                "si".into(),
                "--out".into(),
                s(o("plot.svg")),
            ],
            outputs: vec![o("plot.svg")],
        },
    ]
}

/// `(command, stdout, bytes of each output file)`.
pub type Captured = (&'static str, Vec<u8>, Vec<Vec<u8>>);

pub fn run_all(dir: &Path, seed: &str) -> Result<Vec<Captured>, String> {
    let mut out = Vec::new();
    for inv in every_command(dir) {
        let args: Vec<&str> = inv.args.iter().map(String::as_str).collect();
        let result = parlens(&args, seed);
        if !result.status.success() {
            return Err(format!(
                "{} exited with {:?}: {}",
                inv.name,
                result.status.code(),
                String::from_utf8_lossy(&result.stderr)
            ));
        }
        let files = inv
            .outputs
            .iter()
            .map(|p| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display())))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((inv.name, result.stdout, files));
    }
    Ok(out)
}
