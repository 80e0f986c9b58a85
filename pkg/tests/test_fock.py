import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spwitness import fock


def _random_density(rng, d, rank=None):
    g = rng.normal(size=(d, rank or d)) + 1j * rng.normal(size=(d, rank or d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def test_cutoff_validation():
    assert fock.FockCutoff(3).dim == 4
    with pytest.raises(ValueError):
        fock.FockCutoff(0)


@pytest.mark.parametrize(
    "rho, match",
    [
        (np.array([[0.5, 0.1], [0.2, 0.5]]), "Hermitian"),
        (np.diag([1.2, -0.2]), "negative eigenvalue"),
        (np.diag([0.7, 0.7]), "trace"),
        (np.ones((2, 3)) / 3, "square"),
    ],
)
def test_single_mode_rejects_invalid(rho, match):
    with pytest.raises(ValueError, match=match):
        fock.SingleModeState(rho)


def test_two_mode_shape_check():
    with pytest.raises(ValueError, match="expected shape"):
        fock.TwoModeState(np.eye(4) / 4)


def test_states_are_read_only(ideal_state):
    with pytest.raises(ValueError):
        ideal_state.rho[0, 0] = 1.0


def test_flat_index_bob_fastest():
    rho = np.zeros((9, 9))
    rho[1, 1] = 1.0  # |n_A=0, n_B=1>
    state = fock.TwoModeState(rho)
    assert state.element((0, 1), (0, 1)) == 1.0
    assert np.allclose(np.diag(state.reduced("B")).real, [0, 1, 0])
    assert np.allclose(np.diag(state.reduced("A")).real, [1, 0, 0])


def test_product_state_marginals():
    rng = np.random.default_rng(1)
    ra, rb = _random_density(rng, 3), _random_density(rng, 3)
    state = fock.product_state(ra, rb)
    assert np.allclose(state.reduced("A"), ra)
    assert np.allclose(state.reduced("B"), rb)


def test_heralded_source():
    s = fock.heralded_source_state(0.68, 0.02)
    assert np.allclose(s.populations, [0.30, 0.68, 0.02])
    with pytest.raises(ValueError):
        fock.heralded_source_state(0.9, 0.2)
    with pytest.raises(ValueError):
        fock.heralded_source_state(0.5, 0.1, n_max=1)


def test_beam_splitter_single_photon_gives_bell_state(ideal_state):
    split = fock.beam_splitter_split(fock.heralded_source_state(1.0))
    assert np.allclose(split.rho, ideal_state.rho, atol=1e-15)
    assert split.element((1, 0), (0, 1)) == pytest.approx(0.5)


def test_beam_splitter_two_photons_binomial():
    split = fock.beam_splitter_split(fock.heralded_source_state(0.0, 1.0))
    assert split.element((2, 0), (2, 0)).real == pytest.approx(0.25)
    assert split.element((1, 1), (1, 1)).real == pytest.approx(0.5)
    assert split.element((0, 2), (0, 2)).real == pytest.approx(0.25)


@given(st.floats(0.0, 1.0))
def test_beam_splitter_isometry(t):
    V = fock.beam_splitter_isometry(3, t)
    assert np.allclose(V.T @ V, np.eye(4), atol=1e-12)


@given(st.floats(0.0, 1.0), st.integers(1, 5))
def test_loss_kraus_completeness(eta, n_max):
    K = fock.loss_kraus(n_max, eta)
    assert np.allclose(np.einsum("kab,kac->bc", K, K), np.eye(n_max + 1), atol=1e-12)


@settings(max_examples=40)
@given(eta_A=st.floats(0.0, 1.0), eta_B=st.floats(0.0, 1.0))
def test_loss_on_bell_state_matches_closed_form(eta_A, eta_B, ideal_state):
    lossy = fock.apply_loss(ideal_state, fock.LossParams(eta_A, eta_B))
    assert np.allclose(lossy.rho, fock.lossy_bell_state(eta_A, eta_B).rho, atol=1e-14)


def test_loss_composes():
    rng = np.random.default_rng(3)
    state = fock.TwoModeState(_random_density(rng, 9))
    twice = fock.apply_loss(fock.apply_loss(state, fock.LossParams(0.8, 0.6)), fock.LossParams(0.5, 0.9))
    once = fock.apply_loss(state, fock.LossParams(0.4, 0.54))
    assert np.allclose(twice.rho, once.rho, atol=1e-13)


def test_single_mode_loss_on_fock_two():
    out = fock.apply_single_mode_loss(fock.heralded_source_state(0.0, 1.0), 0.3)
    assert np.allclose(out.populations, [0.49, 0.42, 0.09])


def test_loss_params_validation():
    with pytest.raises(ValueError):
        fock.LossParams(1.2, 0.5)
    assert fock.LossParams(0.5, 0.4).eta_AB == pytest.approx(0.2)


def test_with_cutoff_roundtrip(ideal_state):
    big = ideal_state.with_cutoff(4)
    assert big.dim == 5
    back = big.with_cutoff(2)
    assert np.allclose(back.rho, ideal_state.rho)
    two = fock.beam_splitter_split(fock.heralded_source_state(0.0, 1.0))
    with pytest.raises(ValueError, match="drop weight"):
        two.with_cutoff(1)


def test_local_photon_probs():
    state = fock.beam_splitter_split(fock.heralded_source_state(0.68, 0.02))
    sa, sb = fock.local_photon_probs(state)
    assert sa.probs == pytest.approx((0.30 + 0.34 + 0.005, 0.34 + 0.01, 0.005))
    assert sb.probs == pytest.approx(sa.probs)


def test_temporal_overlap_efficiency():
    assert fock.temporal_overlap_efficiency(1.0, 0.0) == 1.0
    g = 0.7
    assert fock.temporal_overlap_efficiency(2.0, 0.35) == pytest.approx((math.exp(-g) * (1 + g)) ** 2)
    with pytest.raises(ValueError):
        fock.temporal_overlap_efficiency(0.0, 1.0)


@pytest.mark.parametrize("eta, km", [(1.0, 0.0), (0.1, 50.0), (0.01, 100.0)])
def test_km_equivalent(eta, km):
    assert fock.km_equivalent(eta) == pytest.approx(km)
