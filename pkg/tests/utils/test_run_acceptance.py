"""
Unit tests for run_acceptance module.
"""

# pylint: disable=E0401,C0413,W0212,W1514,W0718
import sys
import os
import tempfile
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../..")))
import utils.run_acceptance

SMALL_CONFIG = """
model:
  lattice: chain
  size: 4
plan:
  steps: 2
  tau: 0.1
  site: 1
backend:
  mode: exact
postselection:
  neighborhood: none
  max_hamming: 0
estimators: [standard, spectral_purified]
"""


def test_resolve_configs():
    """Test lookup of bundled configuration names."""

    bundled = utils.run_acceptance.resolve_configs([])
    names = [os.path.basename(path) for path in bundled]
    assert "ring6_exact.yaml" in names
    assert utils.run_acceptance.resolve_configs(["ring6_exact"]) == utils.run_acceptance.resolve_configs(["ring6_exact.yaml"])
    with pytest.raises(ValueError):
        utils.run_acceptance.resolve_configs(["no_such_config"])


def test_run_small_config(mocker):
    """Test a run of one configuration file."""

    with tempfile.TemporaryDirectory() as temp_dir:
        config = f"{temp_dir}/chain4.yaml"
        with open(config, "w") as fp:
            fp.write(SMALL_CONFIG)
        testargs = ["run_acceptance", f"{temp_dir}/out", config]
        mocker.patch.object(sys, "argv", testargs)
        rc = utils.run_acceptance.main()
        assert rc == 0, "Unexpected error occurred in the acceptance run."
        assert os.path.exists(f"{temp_dir}/out/chain4.csv")


def test_usage_errors(mocker):
    """Test the return code of bad command lines."""

    mocker.patch.object(sys, "argv", ["run_acceptance"])
    assert utils.run_acceptance.main() == -1
    mocker.patch.object(sys, "argv", ["run_acceptance", "out", "no_such_config"])
    assert utils.run_acceptance.main() == -1
