"""Smoke test for the keyfault extension module."""

import json

import keyfault


def main():
    cfg = keyfault.InjectionConfig("word", 1.0, 42)
    out, decisions = cfg.inject("see you on friday")
    assert len(out) == len("see you on friday")
    # p_t = 1: every word gets exactly max(1, len // 4) substitutions
    applied = [d for d in decisions if d["applied"]]
    assert len(applied) == sum(max(1, len(w) // 4) for w in "see you on friday".split())
    assert cfg.inject("see you on friday") == (out, decisions)

    off, none = keyfault.InjectionConfig("off", 0.5, 1).inject("hello world")
    assert (off, none) == ("hello world", [])

    probs = dict(cfg.distribution("s"))
    assert abs(sum(probs.values()) - 1.0) < 1e-9

    engine = keyfault.InjectionConfig("word", 0.0, 0).engine()
    for c in "toying":
        engine.key_v2(c)
    typed, shown, ds = engine.commit_v2()
    assert typed == shown == "toying" and ds == []

    assert keyfault.classify_word("weekend")[0] == "correct"
    cls, suggestions = keyfault.classify_word("weekwnd")
    assert cls == "minor" and "weekend" in suggestions
    assert keyfault.levenshtein("kitten", "sitting") == 3
    assert keyfault.normalized_levenshtein("See you, Friday.", "see you friday") == 0

    plan = keyfault.make_plan(0, 0)
    assert sorted(plan["conditions"]) == ["C1", "C2", "C3", "C4"]

    rows = keyfault.simulate()
    assert len(rows) == 80
    c1 = [r["report"]["backspace_ratio"] for r in rows if r["condition"] == "C1"]
    c2 = [r["report"]["backspace_ratio"] for r in rows if r["condition"] == "C2"]
    assert sum(c2) / len(c2) > sum(c1) / len(c1)

    print(json.dumps({"injected": out, "decisions": len(decisions), "reports": len(rows)}))
    print("smoke test ok")


if __name__ == "__main__":
    main()
