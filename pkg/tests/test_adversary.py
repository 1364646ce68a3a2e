import itertools
import math

import numpy as np
import pytest

from uwqkd.adversary import (AttackConfig, AttackKind, attack_branches, calibrate_pns_efficiency,
                             eve_measurement, intercept_resend, pns_attack, _pns_gain)


def test_intercept_resend_error_by_enumeration():
    # Alice state x Eve basis x Eve outcome x Bob basis (sifted only)
    err = weight = 0.0
    for alice, eve_basis, bob_bit_if_conj in itertools.product(range(4), (0, 1), (0, 1)):
        a_basis, a_bit = alice >> 1, alice & 1
        eve_bit = a_bit if eve_basis == a_basis else bob_bit_if_conj
        resent_basis = eve_basis
        # Bob measures in Alice's basis after sifting
        for bob_coin in (0, 1):
            bob_bit = eve_bit if resent_basis == a_basis else bob_coin
            w = 1 / 4 * 1 / 2 * 1 / 2 * 1 / 2
            weight += w
            err += w * (bob_bit != a_bit)
    assert err / weight == pytest.approx(0.25)


def test_eve_measurement_error_rate(rng):
    pol = rng.integers(0, 4, 400_000)
    out = eve_measurement(pol, rng)
    same_basis = (out >> 1) == (pol >> 1)
    assert np.all((out & 1)[same_basis] == (pol & 1)[same_basis])
    assert abs(np.mean(same_basis) - 0.5) < 0.005


def test_intercept_fraction_zero_is_identity(rng):
    pol = rng.integers(0, 4, 1000)
    k = rng.poisson(0.9, 1000)
    out_pol, out_k, hit = intercept_resend(pol, k, AttackConfig(AttackKind.INTERCEPT, 0.0), rng)
    assert np.array_equal(out_pol, pol) and np.array_equal(out_k, k) and not hit.any()


def test_pns_forwarding():
    assert pns_attack(1) == 0 and pns_attack(3) == 2 and pns_attack(0) == 0
    assert pns_attack(np.array([0, 1, 2, 5])).tolist() == [0, 0, 1, 4]
    with pytest.raises(ValueError):
        pns_attack(2, AttackConfig(AttackKind.INTERCEPT))


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(AttackKind.INTERCEPT, 1.5)
    assert AttackConfig("pns").kind is AttackKind.PNS


def test_pns_gain_closed_form(rng):
    mu, click = 0.9, 0.3
    k = rng.poisson(mu, 10**6)
    fwd = np.maximum(k - 1, 0)
    sim = np.mean(rng.binomial(fwd, click) > 0)
    exact = _pns_gain(mu, click)
    assert abs(sim - exact) < 4 * math.sqrt(exact / 10**6)


def test_pns_calibration_matches_honest_gain():
    mu, eta, click = 0.9, 3.1623e-4, 0.14
    eff = calibrate_pns_efficiency(mu, eta, click)
    assert 0 < eff < 1
    honest = -math.expm1(-mu * eta * click)
    assert _pns_gain(mu, eff * click) == pytest.approx(honest, rel=1e-9)
    assert calibrate_pns_efficiency(mu, 1.0, 1.0) == 1.0


def test_branches():
    assert [b.kind for b in attack_branches(AttackConfig(), 0.1, 0.9, 0.14)] == ["direct"]
    half = attack_branches(AttackConfig(AttackKind.INTERCEPT, 0.5), 0.1, 0.9, 0.14)
    assert sorted(b.kind for b in half) == ["direct", "resend"]
    assert sum(b.weight for b in half) == 1.0
    (split,) = attack_branches(AttackConfig(AttackKind.PNS), 0.1, 0.9, 0.14)
    assert split.forwarded(np.array([1, 2, 3])).tolist() == [0, 1, 2]
