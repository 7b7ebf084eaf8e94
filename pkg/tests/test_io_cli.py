"""File formats: exact round-trips and hostile inputs. CLI: exit codes,
byte-stable artifacts, and option precedence. All CLI runs are in-process
through main(argv)."""
import json
import os
import re

import numpy as np
import pytest

import founderhmm
import founderhmm.cli as cli
from founderhmm import (ErrorEntry, ErrorReport, HaplotypeSequence,
                        ImputationEntry, ImputationResult, InputError,
                        LocusMap, MultilocusGenotype, TrainConfig,
                        train_founder_hmm)
from founderhmm.io_formats import (CONFIG_ENV, atomic_write, fmt,
                                   load_config_file, read_error_report,
                                   read_genotypes, read_haplotypes,
                                   read_imputation, read_locus_map,
                                   read_model, write_error_report,
                                   write_genotypes, write_haplotypes,
                                   write_imputation, write_locus_map,
                                   write_model)

LOCATED = re.compile(r".+:\d+: ")  # parse errors carry path:line:


# ------------------------------------------------------------- round-trips

def test_genotype_round_trip_with_missing_and_echo(tmp_path):
    path = tmp_path / "c.gen"
    rng = np.random.default_rng(0)
    symbols = rng.integers(-1, 3, size=(5, 17)).astype(np.int8)
    corpus = [MultilocusGenotype(f"S{j}", symbols[j]) for j in range(5)]
    write_genotypes(path, corpus, config_line="#config: test a=1")
    back = read_genotypes(path)
    assert [g.sample_id for g in back] == [g.sample_id for g in corpus]
    for a, b in zip(corpus, back):
        assert np.array_equal(a.symbols, b.symbols)
    assert path.read_text().startswith("#config: test a=1\n#samples=5 loci=17\n")


def test_empty_corpus_round_trips(tmp_path):
    path = tmp_path / "empty.gen"
    write_genotypes(path, [])
    assert read_genotypes(path) == []


def test_haplotype_round_trip_and_symbol_guard(tmp_path):
    path = tmp_path / "p.hap"
    panel = [HaplotypeSequence("H0", np.array([0, 1, 1, 0], dtype=np.int8)),
             HaplotypeSequence("H1", np.array([1, 1, 0, 0], dtype=np.int8))]
    write_haplotypes(path, panel)
    back = read_haplotypes(path)
    assert [h.id for h in back] == ["H0", "H1"]
    assert all(np.array_equal(a.alleles, b.alleles) for a, b in zip(panel, back))
    (tmp_path / "bad.hap").write_text("#samples=1 loci=3\nH0\t012\n")
    with pytest.raises(InputError, match=LOCATED):
        read_haplotypes(tmp_path / "bad.hap")


def test_genotype_parse_failures_name_file_and_line(tmp_path):
    cases = {
        "no-header.gen": "S0\t012\n",
        "bad-symbol.gen": "#samples=1 loci=3\nS0\t01x\n",
        "bad-field-count.gen": "#samples=1 loci=3\nS0 012\n",
        "row-mismatch.gen": "#samples=2 loci=3\nS0\t012\n",
        "loci-mismatch.gen": "#samples=1 loci=4\nS0\t012\n",
    }
    for name, text in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(InputError, match=LOCATED):
            read_genotypes(path)


def test_locus_map_round_trips_int_and_float_positions(tmp_path):
    for positions in (np.array([10, 20, 35], dtype=np.int64),
                      np.array([0.5, 1.25, 9.75])):
        m = LocusMap(locus_ids=("a", "b", "c"), positions=positions,
                     typed=np.array([True, False, True]))
        path = tmp_path / "m.map"
        write_locus_map(path, m)
        back = read_locus_map(path)
        assert back.locus_ids == m.locus_ids
        assert back.positions.dtype == positions.dtype
        assert np.array_equal(back.positions, positions)
        assert np.array_equal(back.typed, m.typed)


def test_locus_map_rejects_bad_rows(tmp_path):
    bad_status = tmp_path / "s.map"
    bad_status.write_text("a\t1\tmaybe\n")
    with pytest.raises(InputError, match=LOCATED):
        read_locus_map(bad_status)
    bad_pos = tmp_path / "p.map"
    bad_pos.write_text("a\tx\ttyped\n")
    with pytest.raises(InputError, match=LOCATED):
        read_locus_map(bad_pos)
    with pytest.raises(InputError):
        read_locus_map(tmp_path / "s.map")  # reused: still bad
    empty = tmp_path / "e.map"
    empty.write_text("# nothing\n")
    with pytest.raises(InputError):
        read_locus_map(empty)


def trained_toy_model():
    rng = np.random.default_rng(3)
    panel = [HaplotypeSequence(f"H{j}", rng.integers(0, 2, size=12).astype(np.int8))
             for j in range(14)]
    model, _ = train_founder_hmm(panel, TrainConfig(founders=3, max_iterations=8))
    return model


def test_model_file_is_lossless(tmp_path):
    model = trained_toy_model()
    path = tmp_path / "m.model"
    write_model(path, model, config_line="#config: train x=1")
    back = read_model(path)
    # bit-for-bit: 17 significant digits round-trip every double exactly
    assert np.array_equal(back.initial, model.initial)
    assert np.array_equal(back.transitions, model.transitions)
    assert np.array_equal(back.emissions, model.emissions)


def test_model_reader_rejects_damage(tmp_path):
    model = trained_toy_model()
    good = tmp_path / "good.model"
    write_model(good, model)
    lines = good.read_text().splitlines()

    no_magic = tmp_path / "a.model"
    no_magic.write_text("\n".join(lines[1:]) + "\n")
    with pytest.raises(InputError, match="not a model file"):
        read_model(no_magic)

    wrong_version = tmp_path / "b.model"
    wrong_version.write_text("#founderhmm-model v2\n" + "\n".join(lines[1:]) + "\n")
    with pytest.raises(InputError, match="version"):
        read_model(wrong_version)

    truncated = tmp_path / "c.model"
    truncated.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(InputError, match="incomplete emission"):
        read_model(truncated)

    alien_row = tmp_path / "d.model"
    alien_row.write_text("\n".join(lines) + "\nmystery\t0\t0\n")
    with pytest.raises(InputError, match="unknown row kind"):
        read_model(alien_row)


def sample_error_report():
    entries = (ErrorEntry("S0", 4, "L4", 2, float("inf"), True, 0),
               ErrorEntry("S1", 0, "L0", 1, 1234.0625, True, 2),
               ErrorEntry("S1", 2, "L2", 0, 1.0, False, 0))
    return ErrorReport(entries=entries, threshold=1000.0,
                       failures={"S9": 3}, stats=None)


@pytest.mark.parametrize("json_mode", [False, True])
def test_error_report_round_trip(tmp_path, json_mode):
    report = sample_error_report()
    path = tmp_path / ("r.json" if json_mode else "r.tsv")
    write_error_report(path, report, json_mode=json_mode,
                       config_line="#config: detect t=1000")
    back = read_error_report(path)
    assert back.entries == report.entries  # includes the inf ratio
    assert back.threshold == report.threshold
    assert back.failures == report.failures


def test_error_report_reader_wants_threshold_and_header(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("sample_id\tlocus_id\tlocus_index\tobserved\tratio\tflagged\tsuggested\n")
    with pytest.raises(InputError, match="threshold"):
        read_error_report(path)
    path.write_text("#threshold=10\nwrong\theader\n")
    with pytest.raises(InputError, match=LOCATED):
        read_error_report(path)


@pytest.mark.parametrize("json_mode", [False, True])
def test_imputation_round_trip(tmp_path, json_mode):
    entries = (ImputationEntry("S0", 7, "L7", (0.25, 0.5, 0.25), 1, 0.5),
               ImputationEntry("S1", 7, "L7", (1.0 / 3, 1.0 / 3, 1.0 / 3), 0, 1.0 / 3))
    result = ImputationResult(entries=entries, windows=(),
                              failures=(("S2", 7),), forward_locus_evals=0,
                              backward_locus_evals=0)
    path = tmp_path / ("i.json" if json_mode else "i.tsv")
    write_imputation(path, result, json_mode=json_mode)
    back = read_imputation(path)
    assert len(back.entries) == 2
    for a, b in zip(result.entries, back.entries):
        assert (a.sample_id, a.locus_index, a.locus_id, a.call) == \
            (b.sample_id, b.locus_index, b.locus_id, b.call)
        assert tuple(b.probs) == tuple(a.probs)  # exact, not approximate
        assert b.confidence == a.confidence
    assert back.failures == (("S2", 7),)


def test_fmt_round_trips_doubles():
    rng = np.random.default_rng(1)
    for v in rng.uniform(-1e9, 1e9, size=50):
        assert float(fmt(v)) == v
    assert float(fmt(float("inf"))) == float("inf")


def test_atomic_write_leaves_no_droppings(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write(target, "one\n")
    atomic_write(target, "two\n")  # overwrite in place
    assert target.read_text() == "two\n"
    assert os.listdir(tmp_path) == ["out.txt"]


def test_config_file_loading(tmp_path):
    good = tmp_path / "c.json"
    good.write_text('{"founders": 3, "threshold": 50.0, "naive": true}')
    assert load_config_file(good) == {"founders": 3, "threshold": 50.0,
                                      "naive": True}
    for text in ('["not", "an", "object"]', '{"nested": {"a": 1}}', "{broken"):
        bad = tmp_path / "bad.json"
        bad.write_text(text)
        with pytest.raises(InputError):
            load_config_file(bad)
    with pytest.raises(InputError, match="cannot read"):
        load_config_file(tmp_path / "absent.json")


# -------------------------------------------------------------------- CLI

def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One simulated dataset plus a trained typed-locus model, built through
    the CLI itself so the fixture doubles as a happy-path smoke test."""
    root = tmp_path_factory.mktemp("cliws")
    prefix = str(root / "sim")
    assert run_cli("simulate", "--out-prefix", prefix, "--seed", "3",
                   "--founders", "3", "--loci", "40", "--samples", "6",
                   "--panel-size", "30", "--switch-rate", "0.05",
                   "--error-rate", "0.02", "--missing-rate", "0.02",
                   "--mask-fraction", "0.1") == 0
    model = str(root / "typed.model")
    assert run_cli("train", "--panel", f"{prefix}.ref.typed.hap",
                   "--out", model, "--founders", "3",
                   "--max-iterations", "30", "--seed", "1") == 0
    return {"root": root, "prefix": prefix, "model": model,
            "gen": f"{prefix}.gen", "map": f"{prefix}.map",
            "ref": f"{prefix}.ref.hap", "truth": f"{prefix}.truth.gen"}


def test_simulate_writes_all_artifacts(ws):
    for ext in (".gen", ".map", ".ref.hap", ".ref.typed.hap", ".truth.gen",
                ".truth.hap", ".channels.json"):
        assert os.path.exists(ws["prefix"] + ext), ext
    channels = json.loads(open(ws["prefix"] + ".channels.json").read())
    assert set(channels) >= {"error_records", "missing_records", "masked_loci"}
    assert len(channels["masked_loci"]) == 4  # round(0.1 * 40)


def test_detect_correct_recover_flow(ws, capsys):
    root = ws["root"]
    report = str(root / "flow.report.tsv")
    assert run_cli("detect", "--model", ws["model"], "--genotypes", ws["gen"],
                   "--map", ws["map"], "--threshold", "100",
                   "--out", report) == 0
    first = open(report).readline()
    assert first.startswith("#config: detect ")
    assert "naive" not in first and "block_size" not in first
    assert "seconds" not in open(report).read()

    corrected = str(root / "flow.corrected.gen")
    assert run_cli("correct", "--genotypes", ws["gen"], "--report", report,
                   "--out", corrected) == 0
    completed = str(root / "flow.completed.gen")
    fills = str(root / "flow.fills.tsv")
    assert run_cli("recover", "--model", ws["model"], "--genotypes", corrected,
                   "--out", completed, "--fills", fills) == 0
    assert all("?" not in line.split("\t")[-1]
               for line in open(completed) if not line.startswith("#"))
    capsys.readouterr()

    assert run_cli("evaluate", "--calls", completed, "--truth", ws["truth"],
                   "--map", ws["map"]) == 0
    out = capsys.readouterr().out
    assert re.match(r"total=\d+ discordant=\d+ discordance_rate=[\d.e-]+", out)


def test_impute_and_pipeline_agree(ws):
    root = ws["root"]
    direct = str(root / "direct.imp.tsv")
    piped = str(root / "piped.imp.tsv")
    assert run_cli("impute", "--panel", ws["ref"], "--genotypes", ws["gen"],
                   "--map", ws["map"], "--founders", "3", "--flank", "4",
                   "--seed", "0", "--threads", "1", "--out", direct) == 0
    assert run_cli("pipeline", "--mode", "imp", "--panel", ws["ref"],
                   "--genotypes", ws["gen"], "--map", ws["map"],
                   "--founders", "3", "--flank", "4", "--seed", "0",
                   "--threads", "1", "--out", piped) == 0
    body = lambda p: [l for l in open(p) if not l.startswith("#config:")]
    assert body(direct) == body(piped)


def test_repeat_runs_are_byte_identical(ws):
    root = ws["root"]
    outs = [str(root / f"rerun{i}.imp.tsv") for i in range(4)]
    base = ["--panel", ws["ref"], "--genotypes", ws["gen"], "--map", ws["map"],
            "--founders", "3", "--flank", "4", "--seed", "0"]
    assert run_cli("impute", *base, "--threads", "1", "--out", outs[0]) == 0
    assert run_cli("impute", *base, "--threads", "1", "--out", outs[1]) == 0
    assert run_cli("impute", *base, "--threads", "3", "--out", outs[2]) == 0
    assert run_cli("impute", *base, "--threads", "1", "--naive",
                   "--out", outs[3]) == 0
    reference_bytes = open(outs[0], "rb").read()
    for other in outs[1:]:
        assert open(other, "rb").read() == reference_bytes


def test_detect_engine_toggles_match(ws):
    root = ws["root"]
    outs = {}
    for name, extra in (("plain", []), ("naive", ["--naive"]),
                        ("blocked", ["--block-size", "7"])):
        path = str(root / f"engine-{name}.tsv")
        assert run_cli("detect", "--model", ws["model"],
                       "--genotypes", ws["gen"], "--out", path) == 0
        outs[name] = open(path, "rb").read()
    assert outs["plain"] == outs["naive"] == outs["blocked"]


def test_phase_writes_two_rows_per_sample(ws):
    root = ws["root"]
    completed = str(root / "ph.completed.gen")
    assert run_cli("recover", "--model", ws["model"], "--genotypes", ws["gen"],
                   "--out", completed) == 0
    phased = str(root / "ph.hap")
    assert run_cli("phase", "--model", ws["model"], "--genotypes", completed,
                   "--out", phased) == 0
    ids = [h.id for h in read_haplotypes(phased)]
    assert ids == [f"S{j}.h{k}" for j in range(6) for k in (1, 2)]


def test_evaluate_identity_is_zero_discordant(ws, capsys):
    assert run_cli("evaluate", "--calls", ws["truth"],
                   "--truth", ws["truth"]) == 0
    assert "discordant=0 discordance_rate=0" in capsys.readouterr().out


def test_evaluate_imputation_kind(ws, capsys):
    root = ws["root"]
    imp = str(root / "ev.imp.tsv")
    assert run_cli("impute", "--panel", ws["ref"], "--genotypes", ws["gen"],
                   "--map", ws["map"], "--founders", "3", "--flank", "4",
                   "--out", imp) == 0
    assert run_cli("evaluate", "--kind", "imputation", "--calls", imp,
                   "--truth", ws["truth"], "--map", ws["map"],
                   "--out", str(root / "ev.report.tsv")) == 0
    out = capsys.readouterr().out
    total = int(re.search(r"total=(\d+)", out).group(1))
    assert total == 6 * 4  # every sample scored at every masked locus


def test_sweep_cli_segregates_timings(ws):
    root = ws["root"]
    table = str(root / "sweep.tsv")
    timings = str(root / "sweep.timings.tsv")
    args = ["sweep", "--out", table, "--timings", timings,
            "--founders-grid", "2,3", "--panel-grid", "20,30",
            "--flank-grid", "4", "--loci", "30", "--samples", "4",
            "--mask-fraction", "0.1", "--seed", "5", "--threads", "2"]
    assert run_cli(*args) == 0
    head = open(table).readlines()
    assert head[0].startswith("#config: sweep ")
    assert "seconds" not in head[1]
    assert len(head) == 2 + 4  # echo + header + one row per cell
    assert "seconds" in open(timings).readlines()[1]
    rerun = str(root / "sweep2.tsv")
    assert run_cli(*[a if a != table else rerun for a in args]) == 0
    assert open(rerun, "rb").read() == open(table, "rb").read()


def test_bench_cli_writes_exponent_lines(ws):
    out = str(ws["root"] / "bench.tsv")
    assert run_cli("bench", "--out", out, "--repeats", "1",
                   "--loci-grid", "16,32", "--sample-grid", "4,8",
                   "--founder-grid", "2,3") == 0
    text = open(out).read()
    assert text.count("#exponent\t") == 3
    assert "seconds" in text  # bench IS the timing artifact


def test_train_log_file_holds_trace_and_timing(ws):
    root = ws["root"]
    log = str(root / "train.log")
    out = str(root / "logged.model")
    assert run_cli("train", "--panel", f"{ws['prefix']}.ref.typed.hap",
                   "--out", out, "--founders", "2", "--max-iterations", "5",
                   "--seed", "0", "--log", log) == 0
    text = open(log).read()
    assert "loglik\t0\t" in text and "seconds\t" in text
    assert "seconds" not in open(out).read()  # model artifact stays timeless


# -------------------------------------------------------------- precedence

def founders_of(path):
    return read_model(path).founders


def test_flags_beat_config_beat_defaults(ws, tmp_path, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    cfg = tmp_path / "opts.json"
    cfg.write_text('{"founders": 2, "max_iterations": 4}')
    panel = f"{ws['prefix']}.ref.typed.hap"

    flagged = str(tmp_path / "flag.model")
    assert run_cli("train", "--panel", panel, "--out", flagged,
                   "--config", str(cfg), "--founders", "3") == 0
    assert founders_of(flagged) == 3

    configured = str(tmp_path / "cfg.model")
    assert run_cli("train", "--panel", panel, "--out", configured,
                   "--config", str(cfg)) == 0
    assert founders_of(configured) == 2

    fallback = str(tmp_path / "def.model")
    assert run_cli("train", "--panel", panel, "--out", fallback,
                   "--max-iterations", "4") == 0
    assert founders_of(fallback) == 7


def test_environment_supplies_the_config_file(ws, tmp_path, monkeypatch):
    env_cfg = tmp_path / "env.json"
    env_cfg.write_text('{"founders": 2, "max_iterations": 4}')
    monkeypatch.setenv(CONFIG_ENV, str(env_cfg))
    panel = f"{ws['prefix']}.ref.typed.hap"
    out = str(tmp_path / "env.model")
    assert run_cli("train", "--panel", panel, "--out", out) == 0
    assert founders_of(out) == 2

    # an explicit --config outranks the environment
    flag_cfg = tmp_path / "flag.json"
    flag_cfg.write_text('{"founders": 3, "max_iterations": 4}')
    out2 = str(tmp_path / "env2.model")
    assert run_cli("train", "--panel", panel, "--out", out2,
                   "--config", str(flag_cfg)) == 0
    assert founders_of(out2) == 3


# -------------------------------------------------------------- exit codes

def test_usage_problems_exit_one(capsys):
    assert run_cli("no-such-subcommand") == 1
    assert run_cli() == 1
    assert run_cli("train", "--panel", "x.hap") == 1  # --out missing
    err = capsys.readouterr().err
    assert "error:" in err


def test_missing_and_malformed_inputs_exit_one(ws, tmp_path, capsys):
    assert run_cli("detect", "--model", str(tmp_path / "nope.model"),
                   "--genotypes", ws["gen"], "--out", str(tmp_path / "o")) == 1
    bad = tmp_path / "bad.gen"
    bad.write_text("#samples=1 loci=3\nS0\t01x\n")
    assert run_cli("detect", "--model", ws["model"], "--genotypes", str(bad),
                   "--out", str(tmp_path / "o")) == 1
    assert "bad.gen:2:" in capsys.readouterr().err
    cfg = tmp_path / "broken.json"
    cfg.write_text("{nope")
    assert run_cli("train", "--panel", f"{ws['prefix']}.ref.typed.hap",
                   "--out", str(tmp_path / "m"), "--config", str(cfg)) == 1


def test_internal_faults_exit_two(ws, tmp_path, monkeypatch, capsys):
    def explode(path):
        raise RuntimeError("wiring fault")
    monkeypatch.setattr(cli, "read_model", explode)
    code = run_cli("detect", "--model", ws["model"], "--genotypes", ws["gen"],
                   "--out", str(tmp_path / "o"))
    assert code == 2
    assert "internal error" in capsys.readouterr().err
