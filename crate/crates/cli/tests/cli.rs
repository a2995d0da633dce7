use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use keyfault_core::alphabet;
use keyfault_core::injection::{cap, InjectionConfig, InjectionDecision};
use keyfault_core::session::{EventKind, LogHeader, SessionLog};
use keyfault_core::simulator::{simulate_phrase, TypistProfile};
use keyfault_core::substitution::SubstitutionMatrix;
use keyfault_core::InjectionMode;

fn keyfault(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_keyfault"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut input = child.stdin.take().unwrap();
        if let Some(s) = stdin {
            input.write_all(s.as_bytes()).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const TEXT: &str = "The quick brown fox, jumps over the lazy dog.\nSee you on Friday 3pm!\n";

#[test]
fn inject_off_is_passthrough() {
    let o = keyfault(&["inject", "--mode", "off"], Some(TEXT));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(o.stdout, TEXT.as_bytes());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: 0"));
}

#[test]
fn inject_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = keyfault(
            &["inject", "--mode", "word", "--seed", "42", "--out", out.to_str().unwrap()],
            Some(TEXT),
        );
        assert_eq!(o.status.code(), Some(0));
        let sidecar = fs::read(format!("{}.decisions.jsonl", out.display())).unwrap();
        (fs::read(&out).unwrap(), sidecar)
    };
    let a = run("a.txt");
    let b = run("b.txt");
    assert_eq!(a, b);
    assert_ne!(a.0, TEXT.as_bytes(), "p_t 0.15 over this text should change something");
}

#[test]
fn inject_full_rate_hits_the_cap_on_every_word() {
    let dir = tempfile::tempdir().unwrap();
    let sidecar = dir.path().join("d.jsonl");
    let o = keyfault(
        &["inject", "--mode", "word", "--pt", "1", "--seed", "7", "--decisions", sidecar.to_str().unwrap()],
        Some(TEXT),
    );
    assert_eq!(o.status.code(), Some(0));
    let decisions: Vec<InjectionDecision> = fs::read_to_string(&sidecar)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // one keystroke per input character, so offsets index the input
    let chars: Vec<char> = TEXT.chars().collect();
    let mut start = 0;
    for i in 0..=chars.len() {
        if i == chars.len() || alphabet::is_terminator(chars[i]) {
            let len = i - start;
            if len > 0 {
                let applied = decisions
                    .iter()
                    .filter(|d| d.applied && (start..i).contains(&(d.offset as usize)))
                    .count();
                let eligible = chars[start..i]
                    .iter()
                    .filter(|c| alphabet::contains(alphabet::fold(**c)))
                    .count();
                assert_eq!(applied, cap(len).min(eligible), "word at {start}");
            }
            start = i + 1;
        }
    }
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(keyfault(&["inject", "--mode", "sideways"], Some("")).status.code(), Some(64));
    assert_eq!(keyfault(&["inject", "--pt", "1.5"], Some("")).status.code(), Some(64));
    assert_eq!(keyfault(&["frobnicate"], None).status.code(), Some(64));
    assert_eq!(keyfault(&["--help"], None).status.code(), Some(0));
}

#[test]
fn missing_input_exits_2() {
    assert_eq!(keyfault(&["inject", "/no/such/file"], None).status.code(), Some(2));
    assert_eq!(keyfault(&["analyze", "/no/such/dir"], None).status.code(), Some(2));
    let empty = tempfile::tempdir().unwrap();
    let o = keyfault(&["build-matrix", empty.path().to_str().unwrap(), "--out", "/tmp/unused"], None);
    assert_eq!(o.status.code(), Some(2));
}

fn write_log(dir: &Path, name: &str, log: &SessionLog) {
    fs::write(dir.join(name), log.serialize()).unwrap();
}

/// Types `keys` ('<' is a backspace) and submits.
fn typed_log(id: &str, keys: &str) -> SessionLog {
    let mut log = SessionLog::new(LogHeader::new(id, 0, "test"));
    let mut text = String::new();
    let mut t = 0;
    for k in keys.chars() {
        t += 200;
        if k == '<' {
            text.pop();
            log.push(t, EventKind::Backspace);
        } else {
            text.push(k);
            log.push(t, EventKind::KeyDown { ch: k });
        }
    }
    log.push(t + 300, EventKind::Submit { final_text: text });
    log
}

#[test]
fn build_matrix_from_one_correction() {
    let dir = tempfile::tempdir().unwrap();
    write_log(dir.path(), "s1.jsonl", &typed_log("s1", "hrlllo<<<<<ello"));
    let out = dir.path().join("matrix.txt");
    let o = keyfault(&["build-matrix", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = SubstitutionMatrix::parse(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m.nonzero_cells(), 1);
    assert_eq!(m.get('e', 'r'), 1);
    assert!(stdout(&o).contains("suspect pairs: 1"));
}

#[test]
fn build_matrix_reports_p85_of_session_ratios() {
    let dir = tempfile::tempdir().unwrap();
    // sessions with 0, 1 and 2 corrections over long phrases keep every
    // ratio below 0.146
    let sessions = [
        "the weather is nice today",
        "see yoi<u at the meeting",
        "plwase<<<<<ease call me back after lunx<ch",
        "we need more time for the project",
    ];
    let mut ratios = Vec::new();
    for (i, keys) in sessions.iter().enumerate() {
        let log = typed_log(&format!("s{i}"), keys);
        ratios.push(keyfault_core::metrics::suspect_ratio(&log.events).unwrap());
        write_log(dir.path(), &format!("s{i}.jsonl"), &log);
    }
    assert!(ratios.iter().all(|&r| r <= 0.146), "{ratios:?}");
    let out = dir.path().join("m.txt");
    let o = keyfault(&["build-matrix", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    let text = stdout(&o);
    let p85: f64 = text
        .split("p85 ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(p85 <= 0.146);
    // nearest rank over four sessions is the largest ratio
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!((p85 - max).abs() < 1e-4, "{p85} vs {max}");
}

#[test]
fn analyze_perfect_typist_has_no_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = InjectionConfig::bundled(InjectionMode::Off, 0.0, 0).unwrap();
    for (i, phrase) in ["call me when you land", "the report is due friday"].iter().enumerate() {
        let log = simulate_phrase(&TypistProfile::perfect(), phrase, &config, i as u64).unwrap();
        write_log(dir.path(), &format!("p{i}.jsonl"), &log);
    }
    let o = keyfault(&["analyze", dir.path().to_str().unwrap(), "--json"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let reports: Vec<serde_json::Value> = text
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        let r = &r["report"];
        for field in ["backspace_ratio", "suspect_ratio", "serious_errors", "minor_errors", "accuracy_full"] {
            assert_eq!(r[field].as_f64(), Some(0.0), "{field}");
        }
    }
    assert!(text.contains("Backspace ratio"));
}

#[test]
fn plan_four_participants_form_a_latin_square() {
    let o = keyfault(&["plan", "4", "1"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| l.starts_with("participant"))
        .map(|l| l.split(": ").nth(1).unwrap().split(" (").next().unwrap().split(' ').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.iter().collect::<BTreeSet<_>>().len(), 4);
    }
    for col in 0..4 {
        assert_eq!(rows.iter().map(|r| &r[col]).collect::<BTreeSet<_>>().len(), 4);
    }
    assert_eq!(keyfault(&["plan", "4", "1"], None).stdout, o.stdout);
}

#[test]
fn simulate_bundled_manifest_writes_80_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = keyfault(&["simulate", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("reports: 80\n"));
    let reports = fs::read_to_string(out.join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 80);
    let logs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('p'))
        .count();
    assert_eq!(logs, 80);
    // the written logs analyse cleanly
    let a = keyfault(&["analyze", out.to_str().unwrap()], None);
    assert_eq!(a.status.code(), Some(0));
    assert!(stdout(&a).contains("C4"));
}
