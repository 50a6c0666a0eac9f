"""Acceptance gate: every release criterion at full budget, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the pass/fail lines.
The Euler-oracle comparison (criterion 4) dominates the runtime (~11 minutes
on one core); everything else finishes in seconds.
"""

import pytest

from exitibp import validation


def _check(criterion):
    res = criterion(scale=1.0)
    print(res.line())
    assert res.passed, res.line()


def test_criterion_1_constant_cdf():
    _check(validation.criterion_constant_cdf)


def test_criterion_2_derivative_constant():
    _check(validation.criterion_derivative_constant)


def test_criterion_3_derivative_cosine():
    _check(validation.criterion_derivative_cosine)


@pytest.mark.slow
def test_criterion_4_tanh_vs_euler():
    _check(validation.criterion_tanh_vs_euler)


def test_criterion_5_law_equality():
    _check(validation.criterion_law_equality)


def test_criterion_6_operator_identities():
    _check(validation.criterion_operator_identities)


def test_criterion_7_gig_sampler():
    _check(validation.criterion_gig_sampler)


def test_criterion_8_structural():
    _check(validation.criterion_structural)
