use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gapres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapres"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_file(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("synth.tsv");
    let o = gapres(&["synth", "--n", &n.to_string(), "--seed", "3", "--out", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

/// A run config small enough to finish in seconds.
fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"seed = 9
out_dir = "run"

[data.synth]
n = 40
test_fraction = 0.25

[frozen.train]
epochs = 2
folds = 2

[finetune]
n_models = 1

[finetune.train]
epochs = 1
folds = 2
learning_rate = 0.001

[blend]
w_finetuned = 0.65
w_frozen = 0.35
{extra}"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn validate_accepts_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 100);
    let o = gapres(&["validate", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("100 examples, 0 violations"));
}

#[test]
fn validate_names_a_corrupted_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 10);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[3].split('\t').map(String::from).collect();
    let id = cols[0].clone();
    // Pronoun-offset moved by one character.
    let off: usize = cols[3].parse().unwrap();
    cols[3] = (off + 1).to_string();
    lines[3] = cols.join("\t");
    fs::write(&data, lines.join("\n") + "\n").unwrap();
    let o = gapres(&["validate", p(&data)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains(&id), "{out}");
    assert!(out.contains("1 violations"), "{out}");
}

#[test]
fn missing_file_is_an_io_failure() {
    let o = gapres(&["validate", "/definitely/not/here.tsv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.tsv"));
}

fn write_predictions(path: &Path, ids: &[String], triple: &str) {
    let mut s = String::from("ID,A,B,NEITHER\n");
    for id in ids {
        s.push_str(&format!("{id},{triple}\n"));
    }
    fs::write(path, s).unwrap();
}

fn ids_of(data: &Path) -> Vec<String> {
    fs::read_to_string(data)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect()
}

#[test]
fn uniform_predictions_score_ln3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 20);
    let preds = dir.path().join("uniform.csv");
    let third = 1.0f64 / 3.0;
    write_predictions(&preds, &ids_of(&data), &format!("{third},{third},{third}"));
    let o = gapres(&["score", p(&data), p(&preds), "--format", "tsv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "uniform");
    for col in [1, 2, 3] {
        let ll: f64 = row[col].parse().unwrap();
        assert!((ll - 3f64.ln()).abs() < 1e-12, "column {col}: {ll}");
    }
}

#[test]
fn score_with_corrections_prints_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 20);
    let ids = ids_of(&data);
    let preds = dir.path().join("p.csv");
    write_predictions(&preds, &ids, "0.5,0.3,0.2");
    let gold: Vec<String> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            match (c[6], c[9]) {
                ("TRUE", _) => "A",
                (_, "TRUE") => "B",
                _ => "NEITHER",
            }
            .to_string()
        })
        .collect();
    // Three real changes plus one entry that restates the current label.
    let flip = |l: &str| if l == "NEITHER" { "A" } else { "NEITHER" };
    let ledger = dir.path().join("ledger.tsv");
    let mut text = String::from("id\tlabel\n");
    for i in 0..3 {
        text.push_str(&format!("{}\t{}\n", ids[i], flip(&gold[i])));
    }
    text.push_str(&format!("{}\t{}\n", ids[5], gold[5]));
    fs::write(&ledger, text).unwrap();
    let o = gapres(&["score", p(&data), p(&preds), "--corrections", p(&ledger)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("original labels"));
    assert!(out.contains("corrected labels"));
    assert!(out.contains("corrected labels changed: 3 ("), "{out}");
}

#[test]
fn score_lists_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 10);
    let mut ids = ids_of(&data);
    ids.pop();
    ids.push("stray-id".into());
    let preds = dir.path().join("p.csv");
    write_predictions(&preds, &ids, "0.2,0.3,0.5");
    let o = gapres(&["score", p(&data), p(&preds)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("stray-id") && err.contains("synth-0009"), "{err}");
}

#[test]
fn blend_with_unit_weight_copies_finetuned() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..5).map(|i| format!("x{i}")).collect();
    let (ft, fr, out) = (dir.path().join("ft.csv"), dir.path().join("fr.csv"), dir.path().join("bl.csv"));
    write_predictions(&ft, &ids, "0.7,0.2,0.1");
    write_predictions(&fr, &ids, "0.1,0.1,0.8");
    let o = gapres(&["blend", p(&ft), p(&fr), "--blend-weights", "1,0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&ft).unwrap());
    let o = gapres(&["blend", p(&ft), p(&fr), "--blend-weights", "0.7,0.7", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn embed_and_featurize_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), 6);
    let emb = dir.path().join("e.gapemb");
    let o = gapres(&["embed", p(&data), "--encoder", "uncased", "--layers", "-1,-2", "--out", p(&emb)]);
    assert!(o.status.success(), "{}", stderr(&o));
    // desk-tiny has hidden size 16: 2 layers × 16 per span, six vectors with derived.
    assert!(stdout(&o).contains("6 bundles (192 values each)"), "{}", stdout(&o));
    let feats = dir.path().join("f.csv");
    let o = gapres(&["featurize", p(&data), "--out", p(&feats)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("ID,"));
    let o = gapres(&["embed", p(&data), "--encoder", "no-such", "--out", p(&emb)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_reproducible_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let o = gapres(&["run", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("held-out scores"));
    let run = dir.path().join("run");
    assert!(run.join("manifest.json").exists());
    assert!(!run.join("INCOMPLETE").exists());
    let first: Vec<Vec<u8>> = ["finetuned", "frozen", "blend"]
        .iter()
        .map(|n| fs::read(run.join("predictions").join(format!("{n}.csv"))).unwrap())
        .collect();

    let again = dir.path().join("again");
    let o = gapres(&["run", "--config", p(&cfg), "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (k, n) in ["finetuned", "frozen", "blend"].iter().enumerate() {
        assert_eq!(fs::read(again.join("predictions").join(format!("{n}.csv"))).unwrap(), first[k], "{n}");
    }

    // Unit blend weight from the command line: blend equals the fine-tuned file.
    let o = gapres(&["predict", "--config", p(&cfg), "--out", p(&again), "--blend-weights", "1,0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(again.join("predictions/blend.csv")).unwrap(), first[0]);
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "[features]\nexternal = { corenlp = \"missing.csv\" }\n");
    let o = gapres(&["run", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
    let junk = dir.path().join("junk.toml");
    fs::write(&junk, "seed = \"x\"").unwrap();
    assert_eq!(gapres(&["train", "--config", p(&junk)]).status.code(), Some(2));
}
