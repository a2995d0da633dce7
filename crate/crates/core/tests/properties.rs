use keyfault_core::editor::Replay;
use keyfault_core::injection::{run_stream, InputEvent, TimedInput};
use keyfault_core::metrics::RunHistogram;
use keyfault_core::{InjectionConfig, InjectionMode, SessionLog};
use proptest::prelude::*;

fn input() -> impl Strategy<Value = InputEvent> {
    prop_oneof![
        8 => "[a-z .,]".prop_map(|s| InputEvent::Key { ch: s.chars().next().unwrap() }),
        2 => Just(InputEvent::Backspace),
        1 => (0usize..40).prop_map(|index| InputEvent::CursorMove { index }),
    ]
}

fn mode() -> impl Strategy<Value = InjectionMode> {
    prop_oneof![
        Just(InjectionMode::Off),
        Just(InjectionMode::PerKey),
        Just(InjectionMode::PerWord)
    ]
}

/// Drops cursor moves past the end of the text so the stream never errors.
fn feasible(inputs: Vec<InputEvent>) -> Vec<TimedInput> {
    let mut len = 0usize;
    let mut cursor = 0usize;
    let mut out = Vec::new();
    for input in inputs {
        match &input {
            InputEvent::Key { .. } => {
                len += 1;
                cursor += 1;
            }
            InputEvent::Backspace => {
                if cursor > 0 {
                    len -= 1;
                    cursor -= 1;
                }
            }
            InputEvent::CursorMove { index } => {
                if *index > len {
                    continue;
                }
                cursor = *index;
            }
            _ => {}
        }
        out.push(TimedInput {
            t_ms: out.len() as u64 * 10,
            input,
        });
    }
    out
}

/// Oracle: expand the histogram and take the element at floor(q * n).
fn percentile_oracle(h: &RunHistogram, q: f64) -> Option<usize> {
    let mut all: Vec<usize> = h.0.iter().flat_map(|(&l, &c)| std::iter::repeat_n(l, c)).collect();
    all.sort();
    if all.is_empty() {
        return None;
    }
    let i = ((q * all.len() as f64).floor() as usize).min(all.len() - 1);
    Some(all[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn log_round_trips_and_replays(
        inputs in prop::collection::vec(input(), 0..80),
        mode in mode(),
        p_t in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let cfg = InjectionConfig::bundled(mode, p_t, seed).unwrap();
        let out = run_stream(&cfg, &feasible(inputs)).unwrap();
        let text = out.log.serialize();
        let parsed = SessionLog::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &out.log);
        prop_assert_eq!(parsed.serialize(), text);
        let replay = Replay::run(&out.log.events);
        prop_assert_eq!(replay.skipped, 0);
        prop_assert_eq!(replay.buffer.text(), out.text);
    }

    #[test]
    fn off_mode_is_identity(inputs in prop::collection::vec(input(), 0..80), seed in any::<u64>()) {
        let stream = feasible(inputs);
        let off = run_stream(&InjectionConfig::bundled(InjectionMode::Off, 1.0, seed).unwrap(), &stream).unwrap();
        let plain = run_stream(&InjectionConfig::bundled(InjectionMode::PerKey, 0.0, seed).unwrap(), &stream).unwrap();
        prop_assert_eq!(off.text, plain.text);
        prop_assert!(off.decisions.is_empty());
    }

    #[test]
    fn decision_offsets_increase(
        inputs in prop::collection::vec(input(), 0..80),
        mode in mode(),
        seed in any::<u64>(),
    ) {
        let stream = feasible(inputs);
        let out = run_stream(&InjectionConfig::bundled(mode, 0.5, seed).unwrap(), &stream).unwrap();
        for d in &out.decisions {
            prop_assert!((d.offset as usize) < stream.len());
        }
        if mode == InjectionMode::PerKey {
            prop_assert!(out.decisions.windows(2).all(|w| w[0].offset < w[1].offset));
        }
    }

    #[test]
    fn percentile_matches_oracle_and_is_monotone(
        runs in prop::collection::btree_map(1usize..30, 1usize..20, 0..10),
        q1 in 0.0f64..1.0,
        q2 in 0.0f64..1.0,
    ) {
        let h = RunHistogram(runs);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert_eq!(h.percentile(lo), percentile_oracle(&h, lo));
        prop_assert_eq!(h.p90(), percentile_oracle(&h, 0.9));
        prop_assert!(h.percentile(lo) <= h.percentile(hi));
    }
}
