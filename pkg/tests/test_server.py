import inspect
import json
import math

import pytest

from src import server
from src.logic import _get_help_topic_impl, _list_help_topics_impl


def test_tools_are_registered_without_injected_parameters():
    for definition in server.TOOL_DEFINITIONS:
        wrapper = getattr(server, definition["name"])
        names = list(inspect.signature(wrapper).parameters)
        assert "config_manager" not in names
        assert "worker_pool" not in names


def test_star_product_tool():
    assert server.star_product(f="x", g="px")["result"] == "x*px + (i/2)*hbar"


def test_connection_table_tool():
    table = server.connection_table()
    assert table["variables"] == ["T", "chi", "H", "L"]
    assert {"indices": [1, 2, 2], "value": "-2*H"} in table["entries"]


def test_evaluate_wigner_tool():
    inside = server.evaluate_wigner(E=1.0, m=0.0, H=0.5, L=0.0)
    assert inside["wigner_eigenfunction"] is True
    assert inside["value"]["im"] == pytest.approx(0.0, abs=1e-15)
    assert "singular" in server.evaluate_wigner(E=1.0, m=0.0, H=1.0)


def test_expansion_coefficient_tool():
    c = server.expansion_coefficient(m_tilde=1, m_tilde_prime=0, chi0=0.0, alpha=-0.5 * math.pi)
    assert c["re"] == pytest.approx(0.0, abs=1e-15)
    assert c["im"] == pytest.approx(1.0 / (2.0 * math.pi))


def test_derive_star_operator_rejects_bad_side():
    with pytest.raises(ValueError, match="side"):
        server.derive_star_operator(observable="H", side="middle")


def test_json_results():
    wrapped = server.json_tool_impl()(lambda: {"value": 1 + 1j})
    assert json.loads(wrapped()) == {"value": {"re": 1.0, "im": 1.0}}


def test_help_topics():
    listing = _list_help_topics_impl(server.skills_dir)
    assert "- expression_grammar" in listing
    assert "- verification_checks" in listing
    assert _get_help_topic_impl("verification_checks", server.skills_dir).startswith("#")


@pytest.mark.parametrize("topic", ["../config", "a/b", "missing_topic"])
def test_help_topic_rejections(topic):
    with pytest.raises(ValueError):
        _get_help_topic_impl(topic, server.skills_dir)
