use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use persolid::models::{load_model, AnyModel, Model};
use persolid::{Lang, ProfileSet};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_persolid"));
    cmd.env_remove("PERSOLID_CONFIG_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Letters of a language's inventory, excluding marks.
fn letters(code: &str) -> Vec<char> {
    let profiles = ProfileSet::builtin();
    profiles
        .get(&Lang::new(code).unwrap())
        .unwrap()
        .inventory
        .iter()
        .copied()
        .filter(|c| c.is_alphabetic())
        .collect()
}

/// Deterministic, distinct sentences written with a language's letters.
fn sentences(code: &str, n: usize) -> Vec<String> {
    let l = letters(code);
    // keeps languages with overlapping letters from producing the same text
    let shift: usize = code.bytes().map(usize::from).sum();
    (0..n)
        .map(|i| {
            let mut words = Vec::new();
            let mut x = i;
            let mut tag = String::new();
            loop {
                tag.push(l[x % l.len()]);
                x /= l.len();
                if x == 0 {
                    break;
                }
            }
            words.push(tag);
            for w in 0..4 {
                words.push((0..5).map(|k| l[(shift + i * 7 + w * 13 + k * 3 + k * k) % l.len()]).collect());
            }
            words.join(" ")
        })
        .collect()
}

fn write_corpus(dir: &Path, langs: &[(&str, usize)]) {
    fs::create_dir_all(dir).unwrap();
    for (code, n) in langs {
        fs::write(dir.join(format!("{code}.txt")), sentences(code, *n).join("\n") + "\n").unwrap();
    }
}

fn write_dataset(path: &Path, langs: &[(&str, usize)]) {
    let mut out = String::new();
    for (code, n) in langs {
        for s in sentences(code, *n) {
            out.push_str(&format!("{code}\t0\t{s}\n"));
        }
    }
    fs::write(path, out).unwrap();
}

#[test]
fn normalize_writes_sentences_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("raw");
    fs::create_dir_all(&input).unwrap();
    let text: String = sentences("fas", 3).iter().map(|s| format!("<p>{s}.</p> ")).collect();
    fs::write(input.join("fas.txt"), text).unwrap();
    fs::write(input.join("ckb.txt"), "").unwrap();
    let out = tmp.path().join("clean");
    let res = run_ok(&["normalize", "-i", p(&input), "-o", p(&out)]);
    let fas = fs::read_to_string(out.join("fas.txt")).unwrap();
    assert_eq!(fas.lines().count(), 3);
    assert!(!fas.contains('<'));
    assert_eq!(fs::read_to_string(out.join("ckb.txt")).unwrap(), "");
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    assert!(manifest.lines().any(|l| l.starts_with("fas.txt\t") && l.ends_with("\t3")));
}

#[test]
fn normalize_rejects_unknown_language_naming_the_file() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("raw");
    fs::create_dir_all(&input).unwrap();
    fs::write(input.join("xyz.txt"), "متن").unwrap();
    let res = run(&["normalize", "-i", p(&input), "-o", p(&tmp.path().join("o"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("xyz.txt"));
}

#[test]
fn synthesize_levels_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("clean");
    write_corpus(&input, &[("ckb", 20), ("glk", 20), ("fas", 10)]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = |out: &Path| {
        vec![
            "synthesize".to_string(),
            "-i".into(),
            p(&input).into(),
            "-o".into(),
            p(out).into(),
            "--levels".into(),
            "20,40,60,80,100".into(),
            "--seed".into(),
            "7".into(),
        ]
    };
    let run_args = |out: &Path| {
        let v = args(out);
        run_ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run_args(&a);
    run_args(&b);
    for level in ["20", "40", "60", "80", "100"] {
        for code in ["ckb", "glk"] {
            let path = a.join(level).join(format!("{code}.txt"));
            let text = fs::read_to_string(&path).unwrap();
            assert_eq!(text.lines().count(), 20);
            assert_eq!(text, fs::read_to_string(b.join(level).join(format!("{code}.txt"))).unwrap());
        }
        // conventional-only languages get no noisy copies
        assert!(!a.join(level).join("fas.txt").exists());
    }
    let clean = fs::read_to_string(input.join("ckb.txt")).unwrap();
    assert_ne!(clean, fs::read_to_string(a.join("100").join("ckb.txt")).unwrap());
}

#[test]
fn synthesize_level_validation() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("clean");
    write_corpus(&input, &[("ckb", 5)]);
    let out = tmp.path().join("o");
    let res = run(&["synthesize", "-i", p(&input), "-o", p(&out), "--levels", "37", "--seed", "1"]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    run_ok(&["synthesize", "-i", p(&input), "-o", p(&out), "--levels", "37", "--seed", "1", "--allow-any-level"]);
    assert!(out.join("37").join("ckb.txt").exists());
    // the seed is mandatory
    let res = run(&["synthesize", "-i", p(&input), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("clean");
    write_corpus(&input, &[("ckb", 5)]);
    let out = tmp.path().join("o");
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let res = bin()
        .env("PERSOLID_CONFIG_DIR", &data)
        .args(["synthesize", "-i", p(&input), "-o", p(&out), "--levels", "100", "--seed", "3"])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let builtin = tmp.path().join("b");
    run_ok(&["synthesize", "-i", p(&input), "-o", p(&builtin), "--levels", "100", "--seed", "3"]);
    assert_eq!(
        fs::read(out.join("100/ckb.txt")).unwrap(),
        fs::read(builtin.join("100/ckb.txt")).unwrap()
    );
    let res = bin()
        .env("PERSOLID_CONFIG_DIR", tmp.path().join("missing"))
        .args(["synthesize", "-i", p(&input), "-o", p(&out), "--levels", "100", "--seed", "3"])
        .output()
        .unwrap();
    assert!(!res.status.success());
}

#[test]
fn train_validates_inputs() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let model = tmp.path().join("m.bin");
    let res = run(&["train", "-d", p(&empty), "--kind", "mnb", "-o", p(&model), "--seed", "1"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));

    let data = tmp.path().join("d.tsv");
    write_dataset(&data, &[("arb", 10), ("urd", 10)]);
    for bad in [
        vec!["--lr", "-1"],
        vec!["--dim", "0"],
        vec!["--hidden", "8"],
        vec!["--ngrams", "5-2"],
    ] {
        let mut args = vec!["train", "-d", p(&data), "--kind", "subword", "-o", p(&model), "--seed", "1"];
        args.extend(bad.iter());
        assert!(!run(&args).status.success(), "{bad:?}");
    }
    let res = run(&["train", "-d", p(&data), "--kind", "mnb", "-o", "/nonexistent/dir/m.bin", "--seed", "1"]);
    assert!(!res.status.success());
    let res = run(&["train", "-d", p(&data), "--kind", "mnb", "-o", p(&model)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn train_is_deterministic_and_identify_keeps_lines() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d.tsv");
    write_dataset(&data, &[("arb", 30), ("urd", 30), ("ckb", 30)]);
    let a = tmp.path().join("a.bin");
    let b = tmp.path().join("b.bin");
    for out in [&a, &b] {
        run_ok(&[
            "train", "-d", p(&data), "--kind", "subword", "-o", p(out), "--seed", "4", "--dim", "8", "--epochs", "3",
            "--ngrams", "2-3", "--loss", "hs",
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let input = format!("{}\n\n\u{1}\u{fffe}<b>\x7f\n", sentences("urd", 1)[0]);
    let mut child = bin()
        .args(["identify", "-m", p(&a)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    stdin.write_all(input.as_bytes()).unwrap();
    stdin.write_all(&[0xff, 0xfe, 0x00, b'\n']).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4, "{stdout}");
    for line in &lines {
        let (label, prob) = line.split_once('\t').unwrap();
        assert!(["arb", "urd", "ckb"].contains(&label), "{line}");
        let prob: f64 = prob.parse().unwrap();
        assert!((0.0..=1.0).contains(&prob));
    }
    // the empty and the garbage lines carry no features: same answer
    assert_eq!(lines[1], lines[3]);

    let file = tmp.path().join("in.txt");
    fs::write(&file, sentences("arb", 3).join("\n")).unwrap();
    let out = run_ok(&["identify", "-m", p(&a), "-i", p(&file)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    let res = run(&["identify", "-m", p(&tmp.path().join("missing.bin")), "-i", p(&file)]);
    assert!(!res.status.success());
}

#[test]
fn hierarchical_with_the_reference_clusters() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d.tsv");
    let codes = [
        "sdh", "ckb", "kmr", "hac", "fas", "glk", "mzn", "azb", "pus", "urd", "kas", "pnb", "snd", "skr", "arb", "bal",
        "trw", "uig", "brh",
    ];
    let langs: Vec<(&str, usize)> = codes.iter().map(|c| (*c, 8)).collect();
    write_dataset(&data, &langs);
    let model = tmp.path().join("h.bin");
    run_ok(&[
        "train", "-d", p(&data), "--kind", "hierarchical", "--base", "mnb", "--clusters", "reference", "-o", p(&model),
        "--seed", "1",
    ]);
    match load_model(&model).unwrap() {
        AnyModel::F32(Model::Hierarchical(h)) => {
            assert_eq!(h.experts().len(), 3);
            assert_eq!(h.clusters().unclustered().len(), 5);
        }
        other => panic!("expected a hierarchical f32 model, got {other:?}"),
    }

    let clusters = tmp.path().join("two.clusters");
    fs::write(&clusters, "sdh,ckb\n").unwrap();
    run_ok(&[
        "train", "-d", p(&data), "--kind", "hierarchical", "--base", "mnb", "--clusters", p(&clusters), "-o",
        p(&model), "--seed", "1", "--precision", "f64",
    ]);
    match load_model(&model).unwrap() {
        AnyModel::F64(Model::Hierarchical(h)) => assert_eq!(h.experts().len(), 1),
        other => panic!("expected a hierarchical f64 model, got {other:?}"),
    }
}

fn assembled(tmp: &TempDir) -> PathBuf {
    let input = tmp.path().join("clean");
    write_corpus(&input, &[("fas", 120), ("ckb", 120), ("kmr", 120), ("glk", 120)]);
    let out = tmp.path().join("sets");
    run_ok(&["assemble", "-i", p(&input), "-o", p(&out), "--seed", "5", "--scale", "0.05"]);
    out
}

#[test]
fn assemble_writes_every_mode() {
    let tmp = TempDir::new().unwrap();
    let out = assembled(&tmp);
    for split in ["train", "test"] {
        for mode in ["CLEAN", "NOISY20", "NOISY100", "ALL", "MERGED"] {
            assert!(out.join(split).join(format!("{mode}.tsv")).exists(), "{split}/{mode}");
        }
    }
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    assert!(manifest.contains("fas.txt"));
}

#[test]
fn benchmark_reports_and_significance() {
    let tmp = TempDir::new().unwrap();
    let sets = assembled(&tmp);
    let train = sets.join("train/MERGED.tsv");
    let root = tmp.path().join("root.bin");
    let hier = tmp.path().join("hier.bin");
    run_ok(&["train", "-d", p(&train), "--kind", "mnb", "-o", p(&root), "--seed", "1"]);
    let clusters = tmp.path().join("k.clusters");
    fs::write(&clusters, "ckb,kmr\n").unwrap();
    run_ok(&[
        "train", "-d", p(&train), "--kind", "hierarchical", "--base", "mnb", "--clusters", p(&clusters), "-o",
        p(&hier), "--seed", "1",
    ]);
    let root_arg = format!("root={}", p(&root));
    let hier_arg = format!("hier={}", p(&hier));
    let test_dir = sets.join("test");

    let out = tmp.path().join("report");
    let res = run_ok(&[
        "benchmark", "--model", &root_arg, "--model", &hier_arg, "-d", p(&test_dir), "--modes", "MERGED,CLEAN",
        "--pair", "root,hier", "-o", p(&out),
    ]);
    let sig = fs::read_to_string(out.join("significance.tsv")).unwrap();
    assert!(sig.lines().any(|l| l.starts_with("MERGED\t")), "{sig}");
    let summary = fs::read_to_string(out.join("summary.tsv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    let per_lang = fs::read_to_string(out.join("per_language.tsv")).unwrap();
    assert_eq!(per_lang.lines().count(), 1 + 2 * 2 * 4);
    assert!(String::from_utf8_lossy(&res.stdout).contains("root vs hierarchical"));

    let single = tmp.path().join("single");
    run_ok(&["benchmark", "--model", &root_arg, "-d", p(&test_dir), "-o", p(&single), "--format", "text"]);
    assert!(!single.join("significance.txt").exists());
    let summary = fs::read_to_string(single.join("summary.txt")).unwrap();
    // every mode file in the directory is scored by default
    for mode in ["CLEAN", "NOISY60", "ALL", "MERGED"] {
        assert!(summary.contains(mode), "{summary}");
    }

    let res = run(&["benchmark", "--model", &root_arg, "-d", p(&tmp.path().join("nothing")), "-o", p(&single)]);
    assert!(!res.status.success());
    fs::remove_file(test_dir.join("ALL.tsv")).unwrap();
    let res = run(&["benchmark", "--model", &root_arg, "-d", p(&test_dir), "--modes", "ALL", "-o", p(&single)]);
    assert!(!res.status.success());

    let ext = tmp.path().join("ext");
    // an external identifier that always answers fas
    run_ok(&["benchmark", "--external", "fixed=sed s/.*/fas/", "-d", p(&test_dir), "--modes", "CLEAN", "-o", p(&ext)]);
    let summary = fs::read_to_string(ext.join("summary.tsv")).unwrap();
    let recall: f64 = summary.lines().nth(1).unwrap().split('\t').nth(4).unwrap().parse().unwrap();
    assert!((recall - 0.25).abs() < 1e-4, "{summary}");
}

#[test]
fn clusters_from_a_confusion_matrix() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("cm.tsv");
    fs::write(&path, "predicted\\true\taaa\tbbb\tccc\naaa\t90\t10\t0\nbbb\t10\t90\t0\nccc\t0\t0\t100\n").unwrap();
    let out = run_ok(&["clusters", "--confusion", p(&path)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "aaa,bbb");
    let out = run_ok(&["clusters", "--confusion", p(&path), "--tau", "0.5"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "");
    assert!(!run(&["clusters"]).status.success());
}
