"""The acceptance gate, one test per criterion.

Each test delegates to the corresponding criterion function in
``c0mass_lab.acceptance`` (the same code the ``accept`` CLI subcommand
runs) and asserts its verdict, echoing the measured values on failure so
a red run is diagnosable from the pytest output alone.

The flow criteria are deliberately heavyweight (minutes each); the whole
module stays within the suite's half-hour budget at the pinned default
sizes.
"""

import pytest

from c0mass_lab import acceptance as A


def _run(name):
    result = A.CRITERIA[name]()
    assert result.passed, (
        f"{name} failed: checks={result.checks} measured={result.measured}")
    return result


def test_criterion_mass_identity():
    _run("mass.identity")


def test_criterion_schwarzschild_oracle():
    _run("mass.schwarzschild-oracle")


def test_criterion_rotation_invariance():
    _run("mass.rotation-invariance")


def test_criterion_evolved_testfn():
    _run("testfn.evolved-family")


def test_criterion_flow_fixed_point_and_quadratic_closeness():
    _run("flow.fixed-point-quadratic")


def test_criterion_radial_grid_crosscheck():
    _run("flow.radial-grid-crosscheck")


def test_criterion_gradient_decay():
    _run("flow.gradient-decay")


def test_criterion_bartnik_identity():
    _run("flow.bartnik-identity")


def test_criterion_mass_distortion_exponents():
    _run("flow.mass-distortion")


def test_criterion_monotonicity():
    _run("flow.monotonicity")


def test_criterion_gluing():
    _run("charts.gluing")


def test_criterion_delta_isometry_bound():
    _run("charts.delta-isometry")


def test_criterion_finiteness():
    _run("flow.finiteness")


def test_registry_covers_every_criterion():
    assert len(A.CRITERIA) == 13
    assert A.select_criteria("") == list(A.CRITERIA)


def test_filter_selects_subfamilies():
    assert A.select_criteria("mass.*") == [
        "mass.identity", "mass.schwarzschild-oracle",
        "mass.rotation-invariance"]
    with pytest.raises(ValueError):
        A.select_criteria("no-such-criterion")
