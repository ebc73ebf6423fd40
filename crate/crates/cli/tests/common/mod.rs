//! Helpers shared by the CLI test targets: running the binary and writing a
//! small synthetic deliberation (comments, votes, ratings) to disk.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prefgeom::ingest::EmbeddingStore;
use prefgeom::linalg::dot;
use prefgeom::rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_prefgeom");

/// Runs `prefgeom` in `cwd` with the given arguments.
pub fn prefgeom(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(cwd).args(args).output().expect("binary runs")
}

pub fn describe(o: &Output) -> String {
    format!(
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

/// SHA-256 of every file in `dir`, keyed by file name.
pub fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            (name, prefgeom::hash::file_sha256(&e.path()).unwrap())
        })
        .collect()
}

pub struct Deliberation {
    pub embeddings: PathBuf,
    pub authorship: PathBuf,
    pub votes: PathBuf,
    pub ratings: PathBuf,
}

/// Writes a deliberation where user `u{i}` wrote comment `c{i}` about seed
/// statement `s{i % statements}` and votes on `per_user` other comments.
///
/// Approval probability is `logistic(signal · cos(own comment, comment))`, so
/// `signal = 0` gives votes independent of everything else. Each user also
/// rates every seed statement on the 0 to 6 scale.
pub fn deliberation(dir: &Path, users: usize, per_user: usize, signal: f64, seed: u64) -> Deliberation {
    const DIM: usize = 16;
    const STATEMENTS: usize = 12;
    let mut r = rng::stream(seed, 0);
    let mut store = EmbeddingStore::new(DIM);
    let statements: Vec<_> = (0..STATEMENTS).map(|_| rng::unit_vector(&mut r, DIM)).collect();
    let comments: Vec<_> = (0..users).map(|_| rng::unit_vector(&mut r, DIM)).collect();
    for (j, s) in statements.iter().enumerate() {
        store.insert(format!("s{j}"), s.as_slice().to_vec(), Some(format!("statement {j}"))).unwrap();
    }
    for (i, c) in comments.iter().enumerate() {
        store.insert(format!("c{i}"), c.as_slice().to_vec(), None).unwrap();
    }

    let mut authorship = String::from("participant_id,text_id,about_statement\n");
    let mut votes = String::from("participant_id,statement_id,value\n");
    let mut ratings = String::from("participant_id,statement_id,value\n");
    for i in 0..users {
        writeln!(authorship, "u{i},c{i},s{}", i % STATEMENTS).unwrap();
        let mut others: Vec<usize> = (0..users).filter(|&j| j != i).collect();
        rng::shuffle(&mut r, &mut others);
        let mut chosen = others[..per_user.min(others.len())].to_vec();
        chosen.sort_unstable();
        for j in chosen {
            let c = dot(comments[i].as_slice(), comments[j].as_slice()).unwrap();
            let p = 1.0 / (1.0 + (-signal * c).exp());
            writeln!(votes, "u{i},c{j},{}", u8::from(rng::uniform(&mut r, 0.0, 1.0) < p)).unwrap();
        }
        for (j, s) in statements.iter().enumerate() {
            let c = dot(comments[i].as_slice(), s.as_slice()).unwrap();
            let v = (3.0 + 3.0 * signal.min(1.0) * c + rng::standard_normal(&mut r)).round().clamp(0.0, 6.0);
            writeln!(ratings, "u{i},s{j},{v}").unwrap();
        }
    }

    let d = Deliberation {
        embeddings: dir.join("embeddings.jsonl"),
        authorship: dir.join("authorship.csv"),
        votes: dir.join("votes.csv"),
        ratings: dir.join("ratings.csv"),
    };
    store.save(&d.embeddings).unwrap();
    std::fs::write(&d.authorship, authorship).unwrap();
    std::fs::write(&d.votes, votes).unwrap();
    std::fs::write(&d.ratings, ratings).unwrap();
    d
}

/// Local embedding endpoint answering every text with `[len, 1, vowels]`.
pub fn embedding_server() -> String {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/embeddings", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let body: serde_json::Value = serde_json::from_slice(&buf).unwrap();
            let data: Vec<serde_json::Value> = body["input"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let t = t.as_str().unwrap();
                    let vowels = t.chars().filter(|c| "aeiou".contains(*c)).count();
                    serde_json::json!({"index": i, "embedding": [t.len() as f64, 1.0, vowels as f64]})
                })
                .collect();
            let text = serde_json::json!({ "data": data }).to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    url
}

/// Every command of the tool, with fast settings, as run by [`pipeline`].
pub fn commands(url: &str) -> Vec<Vec<String>> {
    let data = "--embeddings embeddings.jsonl --authorship authorship.csv";
    let lines = [
        "ingest --embeddings embeddings.jsonl --votes votes.csv".to_string(),
        "triplets --votes votes.csv --authorship authorship.csv --seed 3".into(),
        format!("fit {data} --train out/triplets.train.jsonl --val out/triplets.val.jsonl --rank 4 --epochs 15 --batch-size 64"),
        format!("eval {data} --triplets out/triplets.test.jsonl --scorers cosine,out/scorer.json"),
        format!(
            "sweep {data} --train out/triplets.train.jsonl --val out/triplets.val.jsonl --test out/triplets.test.jsonl \
             --values 1,2 --seeds 1,2 --epochs 5 --batch-size 64"
        ),
        "angles --a out/scorer.json --b out/scorer.json".into(),
        "stats wilcoxon --a out/outcomes.cosine.tsv --b out/outcomes.scorer.tsv".into(),
        "stats mcnemar --a out/outcomes.cosine.tsv --b out/outcomes.scorer.tsv".into(),
        "stats paired-t --a out/outcomes.cosine.tsv --b out/outcomes.scorer.tsv".into(),
        format!("bands {data} --votes votes.csv --scorer out/scorer.json"),
        format!("cluster {data} --votes votes.csv --k-list 2,3 --kmeans-seeds 2 --perms 10"),
        format!("likert {data} --ratings ratings.csv"),
        "synthetic generate --dim 16 --subspace-dim 4 --triplets 2000".into(),
        "synthetic risk-curve --dim 16 --subspace-dim 4 --triplets 2000".into(),
        "synthetic derivative-at-zero --dim 16 --subspace-dim 4 --triplets 2000".into(),
        "synthetic verify-hard-condition --dim 16 --subspace-dim 4 --triplets 2000".into(),
        format!("embed --texts texts.jsonl --endpoint {url} --batch 2 --max-in-flight 2"),
    ];
    lines.iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect()
}

/// Writes the fixture into `cwd` and runs every command with outputs in
/// `cwd/out`, then `verify`. Panics on the first failing command.
pub fn pipeline(cwd: &Path, url: &str, jobs: usize) {
    deliberation(cwd, 80, 30, 4.0, 5);
    std::fs::write(
        cwd.join("texts.jsonl"),
        "{\"id\":\"t1\",\"text\":\"more bike lanes\"}\n{\"id\":\"t2\",\"text\":\"cheaper buses\"}\n\
         {\"id\":\"t3\",\"text\":\"a quieter town centre\"}\n",
    )
    .unwrap();
    let jobs = jobs.to_string();
    for cmd in commands(url) {
        let mut args = vec!["--out", "out", "--jobs", jobs.as_str()];
        args.extend(cmd.iter().map(String::as_str));
        let o = prefgeom(cwd, &args);
        assert!(o.status.success(), "prefgeom {}\n{}", cmd.join(" "), describe(&o));
    }
    let o = prefgeom(cwd, &["verify", "out"]);
    assert!(o.status.success(), "verify\n{}", describe(&o));
}
