import hashlib
import math
import warnings
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aismaca.ca_core import Chromosome
from aismaca.errors import ContractError, EncodingError, LoadError, NumericalError
from aismaca.eval_harness import q3
from aismaca.immune_evolve import EvolveConfig
from aismaca.protein_pipeline import (
    ClassEnsemble,
    CodeBandWarning,
    EncodingConfig,
    ProteinRecord,
    Signal,
    WindowEncoding,
    class_patterns,
    classify_sequence,
    convolve,
    deconvolve,
    encode_hydrophobicity,
    encode_structure,
    fit_residual,
    load_scale,
    parse_scale,
    predict_structure,
    similarity_score,
    similarity_search,
    threshold_decode,
    train_class_ensemble,
)
from aismaca.synthetic import planted_class_records, planted_family, well_conditioned_protein

SCALE_SHA256 = "3711dfb911827d3a41709b66a973cfd2efd3353ee1130ef431b45a3edcfd3f73"


@pytest.fixture(scope="module")
def cfg():
    return EncodingConfig()


def slow_convolve(i, f):
    out = [0.0] * (len(i) + len(f) - 1)
    for a, x in enumerate(i):
        for b, y in enumerate(f):
            out[a + b] += x * y
    return out


def brute_similarity(a, b, min_overlap=5):
    """All-offsets Pearson correlation written without numpy."""
    best = None
    for i in range(len(a)):
        for j in range(len(b)):
            if i and j:
                continue
            n = min(len(a) - i, len(b) - j)
            if n < min_overlap:
                continue
            x, y = a[i:i + n], b[j:j + n]
            mx, my = sum(x) / n, sum(y) / n
            sx = math.sqrt(sum((v - mx) ** 2 for v in x))
            sy = math.sqrt(sum((v - my) ** 2 for v in y))
            if sx == 0 or sy == 0:
                continue
            r = sum((u - mx) * (v - my) for u, v in zip(x, y)) / (sx * sy)
            best = r if best is None else max(best, r)
    return 0.0 if best is None else best


# ---------------------------------------------------------------- scale


def test_scale_file_checksum():
    data = resources.files("aismaca.data").joinpath("scale.tsv").read_bytes()
    assert hashlib.sha256(data).hexdigest() == SCALE_SHA256


def test_scale_has_twenty_residues(cfg):
    assert len(cfg.hydro_scale) == 20
    assert cfg.hydro_scale["I"] == 4.5
    assert cfg.hydro_scale["R"] == -4.5


def test_parse_scale_rejects_bad_lines():
    assert parse_scale("# c\nA\t1.0\n\n") == {"A": 1.0}
    with pytest.raises(LoadError, match="line 1"):
        parse_scale("A 1 2")
    with pytest.raises(LoadError, match="bad value"):
        parse_scale("A x")


def test_load_scale_missing_file(tmp_path):
    with pytest.raises(LoadError, match="missing.tsv"):
        load_scale(tmp_path / "missing.tsv")


# ---------------------------------------------------------------- encoding


def test_encode_hydrophobicity_values(cfg):
    assert encode_hydrophobicity("AIV", cfg).values.tolist() == [1.8, 4.5, 4.2]


def test_encode_hydrophobicity_unknown_letter(cfg):
    with pytest.raises(EncodingError, match="'X' at position 1"):
        encode_hydrophobicity("AXV", cfg)


def test_encode_structure_codes(cfg):
    assert encode_structure("HEC", cfg).values.tolist() == [100.0, 700.0, 400.0]
    with pytest.raises(EncodingError, match="position 2"):
        encode_structure("HEX", cfg)


def test_signal_is_read_only_and_finite():
    s = Signal([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 5.0
    with pytest.raises(ContractError):
        Signal([1.0, float("nan")])


def test_record_structure_must_match_sequence():
    with pytest.raises(ContractError, match="length"):
        ProteinRecord("p", "AAA", "HH")
    with pytest.raises(ContractError):
        ProteinRecord("p", "AAA", "HHX")


# ---------------------------------------------------------------- decoding


def test_threshold_decode_band_edges(cfg):
    values = [-10, 0, 150, 200, 201, 400, 599, 600, 700, 800, 801]
    assert threshold_decode(Signal(values), cfg) == "CHHHCCCEEEC"


@given(st.text(alphabet="HEC", min_size=1, max_size=60))
def test_structure_round_trip(ss):
    cfg = EncodingConfig(hydro_scale={"A": 0.0})
    assert threshold_decode(encode_structure(ss, cfg), cfg) == ss


def test_published_code_sets_warn():
    with pytest.warns(CodeBandWarning):
        c = EncodingConfig.published_codes()
    assert threshold_decode(encode_structure("HEC", c), c) == "HEE"
    with pytest.warns(CodeBandWarning):
        c = EncodingConfig.published_alt_codes()
    assert threshold_decode(encode_structure("HEC", c), c) == "CEC"


def test_default_codes_do_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        EncodingConfig()


@pytest.mark.parametrize(
    "kw",
    [
        {"decode_bands": (0, 700, 600, 800)},
        {"decode_bands": (200, 0, 600, 800)},
        {"filter_length": 0},
        {"ridge": -1.0},
        {"tail": "wrap"},
    ],
)
def test_invalid_encoding_config(kw):
    with pytest.raises(ContractError):
        EncodingConfig(**kw)


def test_encoding_config_from_dict(tmp_path):
    (tmp_path / "s.tsv").write_text("A\t1\nC\t2\n")
    c = EncodingConfig.from_dict({"scale": "s.tsv", "filter_length": 3, "tail": "pad"}, tmp_path)
    assert c.hydro_scale == {"A": 1.0, "C": 2.0}
    assert (c.filter_length, c.tail) == (3, "pad")
    with pytest.raises(ContractError, match="unknown"):
        EncodingConfig.from_dict({"bogus": 1})


# ---------------------------------------------------------------- convolution


def test_convolve_trims_to_input_length():
    out = convolve(Signal([1, 2, 3]), Signal([1, 1]))
    assert out.values.tolist() == [1.0, 3.0, 5.0]


def test_convolve_matches_double_loop():
    rng = np.random.default_rng(3)
    i, f = rng.normal(size=17), rng.normal(size=5)
    expected = slow_convolve(i.tolist(), f.tolist())[:17]
    np.testing.assert_allclose(convolve(Signal(i), Signal(f)).values, expected, atol=1e-12)


@settings(max_examples=50)
@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=20),
    st.lists(st.floats(-5, 5), min_size=5, max_size=5),
    st.lists(st.floats(-5, 5), min_size=5, max_size=5),
    st.floats(-3, 3),
)
def test_convolve_is_linear_in_filter(i, f, g, a):
    lhs = convolve(Signal(i), Signal(np.array(f) + a * np.array(g))).values
    rhs = convolve(Signal(i), Signal(f)).values + a * convolve(Signal(i), Signal(g)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_deconvolve_two_tap_example():
    c = EncodingConfig(filter_length=2, ridge=0.0)
    f = deconvolve(Signal([1, 0]), Signal([2, 3, 0]), c)
    np.testing.assert_allclose(f.values, [2, 3], atol=1e-12)


def test_deconvolve_delta_input_returns_output():
    o = np.array([5.0, -1.0, 2.0, 0.0, 0.0, 0.0])
    c = EncodingConfig(filter_length=3, ridge=0.0)
    f = deconvolve(Signal([1, 0, 0, 0]), Signal(o), c)
    np.testing.assert_allclose(f.values, o[:3], atol=1e-12)


@pytest.mark.parametrize("tail", ["truncate", "pad"])
def test_deconvolve_recovers_random_filter_from_full_output(tail):
    rng = np.random.default_rng(11)
    for _ in range(20):
        i, f_true = rng.normal(size=40), rng.normal(size=5)
        o = slow_convolve(i.tolist(), f_true.tolist())
        c = EncodingConfig(filter_length=5, ridge=0.0, tail=tail)
        np.testing.assert_allclose(deconvolve(Signal(i), Signal(o), c).values, f_true, atol=1e-9)


def test_deconvolve_truncated_output_is_exact():
    rng = np.random.default_rng(5)
    i, f_true = rng.normal(size=30), rng.normal(size=4)
    o = convolve(Signal(i), Signal(f_true))
    c = EncodingConfig(filter_length=4, ridge=0.0)
    f = deconvolve(Signal(i), o, c)
    np.testing.assert_allclose(f.values, f_true, atol=1e-9)
    assert fit_residual(Signal(i), o, f, c) < 1e-12


def test_deconvolve_is_least_squares_optimal():
    rng = np.random.default_rng(8)
    i, o = Signal(rng.normal(size=25)), Signal(rng.normal(size=25))
    c = EncodingConfig(filter_length=4, ridge=0.0)
    f = deconvolve(i, o, c)
    base = fit_residual(i, o, f, c)
    for k in range(4):
        for step in (1e-3, -1e-3):
            g = np.array(f.values)
            g[k] += step
            assert fit_residual(i, o, Signal(g), c) >= base


def test_deconvolve_ridge_shrinks_filter():
    rng = np.random.default_rng(9)
    i, o = Signal(rng.normal(size=25)), Signal(rng.normal(size=25))
    plain = deconvolve(i, o, EncodingConfig(filter_length=4, ridge=0.0)).values
    shrunk = deconvolve(i, o, EncodingConfig(filter_length=4, ridge=100.0)).values
    assert np.linalg.norm(shrunk) < np.linalg.norm(plain)


def test_deconvolve_rank_deficient_without_ridge():
    c = EncodingConfig(filter_length=3, ridge=0.0)
    with pytest.raises(NumericalError, match="ridge"):
        deconvolve(Signal([0, 0, 0, 0]), Signal([1, 2, 3, 4]), c)
    f = deconvolve(Signal([0, 0, 0, 0]), Signal([1, 2, 3, 4]), replace(c, ridge=1e-3))
    assert np.allclose(f.values, 0)


def test_deconvolve_length_checks():
    c = EncodingConfig(filter_length=5)
    with pytest.raises(ContractError, match="shorter"):
        deconvolve(Signal([1, 2, 3]), Signal([1, 2, 3]), c)
    with pytest.raises(ContractError, match="output length"):
        deconvolve(Signal(np.ones(8)), Signal(np.ones(9)), c)


# ---------------------------------------------------------------- similarity


def test_similarity_identical_is_one():
    a = [1.0, -2.0, 3.0, 0.5, 4.0, -1.0]
    assert similarity_score(a, a) == pytest.approx(1.0)


def test_similarity_constant_signal_scores_zero():
    assert similarity_score([1.0] * 8, [1.0, 2, 3, 4, 5, 6]) == 0.0
    assert similarity_score([1.0, 2.0], [1.0, 2.0]) == 0.0


@settings(max_examples=40)
@given(
    st.lists(st.integers(-5, 5), min_size=5, max_size=14),
    st.lists(st.integers(-5, 5), min_size=5, max_size=14),
)
def test_similarity_matches_brute_force_and_is_symmetric(a, b):
    a, b = [float(v) for v in a], [float(v) for v in b]
    s = similarity_score(a, b)
    assert s == pytest.approx(brute_similarity(a, b), abs=1e-9)
    assert s == pytest.approx(similarity_score(b, a), abs=1e-12)
    assert -1.0 <= s <= 1.0


def test_similarity_search_ranking(cfg):
    target = ProteinRecord("t", "IVLAGKRD")
    db = [ProteinRecord("rev", "DRKGALVI"), ProteinRecord("far", "GGSTWYPA"), ProteinRecord("near", "IVLAGKRE")]
    ranked = similarity_search(target, db, cfg)
    assert [r.id for r, _ in ranked] == ["near", "far", "rev"]
    scores = [s for _, s in ranked]
    assert scores == pytest.approx([1.0, 0.8621801858257057, -0.5450791465932554], abs=1e-9)


def test_similarity_search_puts_identical_record_first(cfg):
    rng = np.random.default_rng(0)
    letters = sorted(cfg.hydro_scale)
    db = [ProteinRecord(f"r{i}", "".join(rng.choice(letters, 30))) for i in range(6)]
    ranked = similarity_search(ProteinRecord("q", db[3].sequence), db, cfg)
    assert ranked[0][0].id == "r3"
    assert ranked[0][1] == pytest.approx(1.0)


def test_similarity_search_singleton_and_empty(cfg):
    rec = ProteinRecord("only", "AAAAAAA")
    assert similarity_search(ProteinRecord("q", "IVLKRDE"), [rec], cfg)[0][0] is rec
    with pytest.raises(ContractError):
        similarity_search(rec, [], cfg)


# ---------------------------------------------------------------- prediction


def test_predict_self_consistency(cfg):
    c = replace(cfg, filter_length=50, ridge=0.0)
    rng = np.random.default_rng(2)
    for k in range(3):
        rec = well_conditioned_protein(f"w{k}", 50, c, rng)
        pred = predict_structure(ProteinRecord(rec.id, rec.sequence), [rec], c)
        assert pred.structure == rec.structure
        assert pred.base_id == rec.id
        assert pred.residual < 1e-9


def test_predict_planted_family(cfg):
    family = planted_family(12, 60, cfg, 4)
    train, test = family[:9], family[9:]
    scores = [q3(predict_structure(ProteinRecord(t.id, t.sequence), train, cfg).structure, t.structure) for t in test]
    assert np.mean(scores) >= 0.9


def test_predict_preserves_length(cfg):
    family = planted_family(3, 40, cfg, 1)
    for n in (7, 23, 90):
        target = ProteinRecord("q", "A" * n)
        assert len(predict_structure(target, family, cfg).structure) == n


def test_predict_needs_structured_record(cfg):
    with pytest.raises(ContractError, match="known structure"):
        predict_structure(ProteinRecord("q", "AIVLK"), [ProteinRecord("x", "AIVLKAIVLK")], cfg)


# ---------------------------------------------------------------- window encoding


def test_window_encoding_bits(cfg):
    enc = WindowEncoding(3, 2, (-1.0, 0.0, 2.0))
    # R=-4.5 -> 0, G=-0.4 -> 1, A=1.8 -> 2, I=4.5 -> 3, and -1/0/2 edges belong to the upper bucket
    assert enc.residue_bits("RGAI", cfg).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    w = enc.windows("RGAI", cfg)
    assert w.shape == (2, 6)
    assert w[1].tolist() == [0, 1, 1, 0, 1, 1]


def test_window_encoding_fit_equal_population(cfg):
    seqs = ["RKDE" * 3, "LVIA" * 3]
    enc = WindowEncoding(3, 2).fit(seqs, cfg)
    counts = np.bincount(
        np.concatenate([enc.residue_bits(s, cfg) @ np.array([2, 1]) for s in seqs]), minlength=4
    )
    assert counts.tolist() == [6, 6, 6, 6]


def test_window_encoding_validation(cfg):
    with pytest.raises(ContractError):
        WindowEncoding(4)
    with pytest.raises(ContractError):
        WindowEncoding(3, 2, (1.0, 2.0))
    with pytest.raises(ContractError):
        WindowEncoding(3, 1, (2.0,)).windows("AI", cfg)
    with pytest.raises(ContractError, match="fit"):
        WindowEncoding(3).windows("AIVL", cfg)
    assert WindowEncoding().n == 30


# ---------------------------------------------------------------- class ensembles


@pytest.fixture(scope="module")
def class_split():
    recs = planted_class_records(8, 40, 0)
    return recs[:6] + recs[8:14], recs[6:8] + recs[14:]


@pytest.fixture(scope="module")
def small_cfg():
    return EvolveConfig(pop_size=20, n_select=5, max_generations=60, plateau_window=20, seed=0)


def test_class_patterns_labels(cfg, class_split):
    train, _ = class_split
    enc = WindowEncoding(5, 2).fit([r.sequence for r in train], cfg)
    data = class_patterns(train, 1, enc, cfg)
    assert data.patterns.shape == (12 * 36, 10)
    assert int(data.labels.sum()) == 6 * 36


@pytest.mark.parametrize("mode", ["clonal", "hybrid"])
def test_planted_classes_are_separated(cfg, class_split, small_cfg, mode):
    train, test = class_split
    ens = train_class_ensemble(train, 2, WindowEncoding(5, 2), replace(small_cfg, mode=mode), cfg)
    assert ens.affinities == (1.0, 1.0)
    for rec in test:
        label, votes = classify_sequence(rec.sequence, ens, cfg)
        assert label == rec.class_label
        assert votes[label] == 1.0


def test_training_is_deterministic(cfg, class_split, small_cfg):
    train, _ = class_split
    a = train_class_ensemble(train, 2, WindowEncoding(5, 2), small_cfg, cfg)
    b = train_class_ensemble(train, 2, WindowEncoding(5, 2), small_cfg, cfg)
    assert a.to_dict() == b.to_dict()


def test_single_class_ensemble(cfg, class_split, small_cfg):
    train, _ = class_split
    recs = [replace(r, class_label=0) for r in train]
    ens = train_class_ensemble(recs, 1, WindowEncoding(5, 2), small_cfg, cfg)
    assert ens.class_count == 1
    assert classify_sequence(train[0].sequence, ens, cfg)[0] == 0


def test_zero_dv2_votes_nothing_and_ties_go_low(cfg):
    zero = Chromosome.from_bits([[1, 0], [1]], [0, 0])
    ens = ClassEnsemble(WindowEncoding(3, 1, (0.0,)), (zero, zero))
    label, votes = classify_sequence("AIVLKRDE", ens, cfg)
    assert (label, votes) == (0, [0.0, 0.0])


def test_missing_class_is_an_error(cfg, class_split, small_cfg):
    train, _ = class_split
    with pytest.raises(ContractError, match=r"classes \[2\]"):
        train_class_ensemble(train, 3, WindowEncoding(5, 2), small_cfg, cfg)
    with pytest.raises(ContractError, match="class label"):
        train_class_ensemble([replace(train[0], class_label=None)], 1, WindowEncoding(5, 2), small_cfg, cfg)


def test_ensemble_json_round_trip(tmp_path, cfg, class_split, small_cfg):
    train, test = class_split
    ens = train_class_ensemble(train, 2, WindowEncoding(5, 2), small_cfg, cfg)
    path = tmp_path / "model.json"
    ens.save(path)
    back = ClassEnsemble.load(path)
    assert back == ens
    assert classify_sequence(test[0].sequence, back, cfg) == classify_sequence(test[0].sequence, ens, cfg)


def test_ensemble_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(LoadError):
        ClassEnsemble.load(bad)
    bad.write_text('{"window": 3}')
    with pytest.raises(LoadError, match="missing"):
        ClassEnsemble.load(bad)
