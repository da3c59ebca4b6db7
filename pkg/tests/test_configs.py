import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from akann.configs import (ConfigurationError, ProjectionConfig, assign_batch, assign_reference, build_config,
                           build_gaussian, build_pol, build_ran, build_sym, compare_j, config_bytes,
                           estimate_j, read_config, reference_cosines, write_config)
from akann.linalg import SubspaceLayout, make_rng, sample_uniform_sphere
from akann.special import refangle_lower_bound
from akann.stats import one_sided_ks_2samp


def brute_force_reference(x, cfg):
    """Search every one of the m^L concatenated codewords directly."""
    best, best_codes = -np.inf, None
    for codes in itertools.product(range(cfg.m), repeat=cfg.L):
        val = float(np.dot(x, cfg.virtual_codeword(codes)))
        if val > best + 1e-12:
            best, best_codes = val, codes
    return np.array(best_codes), best


def check_norms(cfg):
    norms = np.linalg.norm(cfg.codewords, axis=2)
    np.testing.assert_allclose(norms, 1 / math.sqrt(cfg.L), atol=1e-9)


def check_antipodal(cfg):
    np.testing.assert_array_equal(cfg.codewords[:, 1::2], -cfg.codewords[:, 0::2])


def test_sym_minimal():
    cfg = build_sym(2, SubspaceLayout(3, 1), seed=0)
    check_norms(cfg)
    check_antipodal(cfg)
    assert cfg.antipodal


def test_sym_invariants_multilevel():
    cfg = build_sym(256, SubspaceLayout(128, 8), seed=1)
    check_norms(cfg)
    check_antipodal(cfg)
    rng = make_rng(0)
    codes = rng.integers(0, 256, size=(100, 8))
    for c in codes:
        assert np.linalg.norm(cfg.virtual_codeword(c)) == pytest.approx(1.0, abs=1e-8)


def test_sym_rejects_odd_m():
    with pytest.raises(ValueError):
        build_sym(3, SubspaceLayout(3, 1))


def test_pol_single_polytope_covers_every_vector():
    d_sub = 6
    cfg = build_pol(2 * d_sub, SubspaceLayout(d_sub, 1), R=1, N=10_000, seed=2)
    x = sample_uniform_sphere(d_sub, make_rng(3), 20_000)
    _, a_s = assign_batch(x, cfg)
    assert a_s.min() >= 1 / math.sqrt(d_sub) - 1e-12


def test_pol_block_orthogonality():
    cfg = build_pol(256, SubspaceLayout(128, 8), R=2, N=10_000, seed=4)
    check_norms(cfg)
    check_antipodal(cfg)
    for level in cfg.codewords:
        for block in level.reshape(-1, 32, 16):
            gram = block @ block.T
            dist = np.min(np.abs(gram[..., None] - np.array([0.0, 1 / 8, -1 / 8])), axis=-1)
            assert dist.max() <= 1e-9


def test_pol_remainder_pairs():
    # m = 2*4*2 + 6: two full polytopes and three extra pairs
    cfg = build_pol(22, SubspaceLayout(4, 1), R=1, N=10_000, seed=0)
    check_antipodal(cfg)
    check_norms(cfg)
    with pytest.raises(ValueError):
        build_pol(19, SubspaceLayout(4, 1), N=10_000)
    with pytest.raises(ValueError):
        build_pol(1, SubspaceLayout(4, 1), N=10_000)


def test_ran_single_codeword_has_zero_mean():
    est = estimate_j(build_ran(1, SubspaceLayout(8, 1), seed=0), 1_000_000, seed=1)
    assert abs(est.mean) <= 0.005


def test_ran_matches_closed_form():
    lay = SubspaceLayout(128, 1)
    est = estimate_j(build_ran(256, lay, seed=0), 1_000_000, seed=0)
    assert est.mean == pytest.approx(refangle_lower_bound(256, lay), abs=0.005)


def test_ran_codes_are_uniform():
    from scipy.stats import chisquare

    # exchangeability holds over the configuration draw, so average over many configurations
    counts = np.zeros(8)
    for s in range(200):
        cfg = build_ran(8, SubspaceLayout(8, 1), seed=s)
        codes, _ = assign_batch(sample_uniform_sphere(8, make_rng(s, "x"), 500), cfg)
        counts += np.bincount(codes[:, 0], minlength=8)
    assert counts.sum() == 100_000
    assert chisquare(counts).pvalue > 0.001


def test_gaussian_entries_are_normal():
    from scipy.stats import kurtosis, skew

    cfg = build_gaussian(4096, 512, seed=0)
    base = cfg.codewords[0, 0::2].ravel()
    assert base.size >= 1_000_000
    assert abs(skew(base)) <= 0.05
    assert abs(kurtosis(base)) <= 0.05
    check_antipodal(cfg)
    with pytest.raises(ValueError):
        build_gaussian(7, 4)


def test_gaussian_argmax_scale_invariant():
    cfg = build_gaussian(2048, 200, seed=1)
    q = make_rng(2).standard_normal(200)
    c1, _ = assign_batch(q, cfg)
    c2, _ = assign_batch(7.5 * q, cfg)
    assert c1.tolist() == c2.tolist()


def test_gaussian_is_single_level():
    with pytest.raises(ValueError):
        build_config("gaussian", 8, SubspaceLayout(8, 2))


def test_assign_reference_on_codeword():
    cfg = build_sym(16, SubspaceLayout(8, 1), seed=3)
    ref = assign_reference(cfg.codewords[0, 5], cfg)
    assert ref.codes.tolist() == [5]
    assert ref.a_s == pytest.approx(1.0, abs=1e-12)


def test_assign_reference_rejects_non_unit():
    cfg = build_sym(4, SubspaceLayout(3, 1))
    with pytest.raises(ValueError):
        assign_reference(np.array([1.0, 1.0, 0.0]), cfg)


def test_assign_ties_go_to_lowest_index():
    words = np.array([[[1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]]])
    cfg = ProjectionConfig("ran", SubspaceLayout(3, 1), 4, words, False)
    assert assign_reference(np.array([1.0, 0, 0]), cfg).codes.tolist() == [0]


def test_assign_matches_exhaustive_small():
    cfg = build_sym(4, SubspaceLayout(6, 2), seed=0)
    rng = make_rng(1)
    for x in sample_uniform_sphere(6, rng, 50):
        ref = assign_reference(x, cfg)
        codes, best = brute_force_reference(x, cfg)
        assert ref.codes.tolist() == codes.tolist()
        assert ref.a_s == pytest.approx(best, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(["sym", "ran", "pol"]), L=st.sampled_from([1, 2, 3]),
       m=st.sampled_from([2, 4, 6, 8, 16]), seed=st.integers(0, 2**31))
def test_assign_matches_exhaustive_property(kind, L, m, seed):
    if m ** L > 4096:
        return
    d_sub = 3
    cfg = build_config(kind, m, SubspaceLayout(d_sub * L, L), seed, **({"N": 10_000} if kind == "pol" else {}))
    x = sample_uniform_sphere(cfg.d, make_rng(seed, "x"))
    ref = assign_reference(x, cfg)
    codes, best = brute_force_reference(x, cfg)
    assert ref.codes.tolist() == codes.tolist()
    assert ref.a_s == pytest.approx(best, abs=1e-12)


def test_antipodal_reference_cosine_positive():
    cfg = build_sym(64, SubspaceLayout(64, 4), seed=0)
    a = reference_cosines(cfg, 100_000, seed=3)
    assert a.min() > 0


def test_antipodal_pair_expected_cosine():
    est = estimate_j(build_sym(2, SubspaceLayout(3, 1), seed=0), 100_000, seed=0)
    assert est.mean == pytest.approx(0.5, abs=0.01)


def test_stderr_shrinks_with_n():
    cfg = build_sym(32, SubspaceLayout(16, 1), seed=0)
    a = estimate_j(cfg, 200_000, seed=1).stderr
    b = estimate_j(cfg, 400_000, seed=2).stderr
    assert a / b == pytest.approx(math.sqrt(2), rel=0.1)


def test_levels_raise_j():
    a = estimate_j(build_sym(256, SubspaceLayout(128, 1), seed=0), 50_000, seed=0).mean
    b = estimate_j(build_sym(256, SubspaceLayout(128, 8), seed=0), 50_000, seed=0).mean
    assert b > a


def test_sym_beats_ran_on_shared_sample():
    lay = SubspaceLayout(16, 1)
    diff = compare_j(build_sym(32, lay, seed=0), build_ran(32, lay, seed=0), 200_000, seed=0)
    assert diff.mean > 3 * diff.stderr


def test_sym_law_dominates_ran_law():
    lay = SubspaceLayout(16, 1)
    a_sym = reference_cosines(build_sym(32, lay, seed=0), 100_000, seed=1)
    a_ran = reference_cosines(build_ran(32, lay, seed=0), 100_000, seed=2)
    _, p = one_sided_ks_2samp(a_sym, a_ran)
    assert p > 0.001


def test_reference_cosine_must_be_positive_in_kernels():
    from akann.kernels import k2_batch

    words = np.array([[[1.0, 0, 0]]])
    cfg = ProjectionConfig("ran", SubspaceLayout(3, 1), 1, words, False)
    with pytest.raises(ConfigurationError):
        k2_batch(cfg, np.array([[0.0, 1.0, 0]]), np.array([[-1.0, 0, 0]]))


@pytest.mark.parametrize("kind", ["sym", "pol", "ran", "gaussian"])
def test_config_roundtrip(kind, tmp_path):
    L = 1 if kind == "gaussian" else 2
    cfg = build_config(kind, 8, SubspaceLayout(8, L), seed=9, **({"N": 10_000} if kind == "pol" else {}))
    blob = config_bytes(cfg)
    path = tmp_path / "c.akcf"
    write_config(cfg, path)
    back = read_config(path)
    assert config_bytes(back) == blob
    assert back.kind == kind and back.m == 8 and back.L == L
    np.testing.assert_array_equal(back.codewords, cfg.codewords.astype(np.float32))
    assert back.antipodal == cfg.antipodal


def test_config_reader_rejects_damage():
    blob = config_bytes(build_sym(4, SubspaceLayout(3, 1)))
    with pytest.raises(ValueError):
        read_config(io.BytesIO(b"XXXX" + blob[4:]))
    with pytest.raises(ValueError):
        read_config(io.BytesIO(blob[:-1]))
    with pytest.raises(ValueError):
        read_config(io.BytesIO(blob[:5]))


def test_same_seed_same_bytes():
    for kind in ("sym", "ran", "pol"):
        kw = {"N": 10_000} if kind == "pol" else {}
        a = build_config(kind, 32, SubspaceLayout(16, 2), 4, **kw)
        b = build_config(kind, 32, SubspaceLayout(16, 2), 4, **kw)
        assert config_bytes(a) == config_bytes(b)
