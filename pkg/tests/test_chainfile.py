import json

import numpy as np
import pytest

from ticert.chainfile import dump_chain_spec, load_chain_spec, parse_chain_spec
from ticert.errors import InvariantViolation, NotIrreducible, ParseError
from ticert.fixtures import FIXTURES, fixture_path, load_fixture

BAD_ROW = """{
  "states": ["a", "b", "c"],
  "rates": [[-1.0, 1.0, 0.0],
            [1.0, -2.0, 1.5],
            [0.0, 1.0, -1.0]]
}"""


class TestParse:
    def test_mu_defaults_to_stationary(self):
        ch = parse_chain_spec('{"states": ["a", "b"], "rates": [[-2, 2], [1, -1]]}')
        np.testing.assert_allclose(ch.pi, [1 / 3, 2 / 3], atol=1e-14)

    def test_discrete_metric_default(self):
        ch = parse_chain_spec('{"states": ["a", "b"], "rates": [[-1, 1], [1, -1]]}')
        np.testing.assert_array_equal(ch.space.dist, [[0, 1], [1, 0]])

    def test_matrix_metric(self):
        ch = parse_chain_spec('{"states": ["a", "b"], "rates": [[-1, 1], [1, -1]], "metric": [[0, 2], [2, 0]]}')
        assert ch.space.dist[0, 1] == 2.0

    def test_row_error_is_line_anchored(self):
        with pytest.raises(InvariantViolation, match=r"^spec.json:4: row 1 sums to 0.5"):
            parse_chain_spec(BAD_ROW, "spec.json")

    def test_negative_rate(self):
        text = '{"states": ["a", "b"],\n "rates": [[1, -1],\n [1, -1]]}'
        with pytest.raises(InvariantViolation, match=r":2: negative rate Q\[0\]\[1\]"):
            parse_chain_spec(text)

    def test_invalid_json(self):
        with pytest.raises(ParseError, match="invalid JSON"):
            parse_chain_spec('{"states": [}')

    def test_missing_field(self):
        with pytest.raises(ParseError, match="'rates'"):
            parse_chain_spec('{"states": ["a"]}')

    def test_shape_mismatch(self):
        with pytest.raises(ParseError, match="shape"):
            parse_chain_spec('{"states": ["a", "b"], "rates": [[0]]}')

    def test_bad_metric_is_anchored(self):
        text = '{"states": ["a", "b"],\n "rates": [[-1, 1], [1, -1]],\n "metric": [[0, 1], [3, 0]]}'
        with pytest.raises(InvariantViolation, match=r":3:"):
            parse_chain_spec(text)

    def test_reducible(self):
        with pytest.raises(NotIrreducible):
            parse_chain_spec('{"states": ["a", "b"], "rates": [[0, 0], [0, 0]]}')

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read"):
            load_chain_spec(tmp_path / "missing.json")

    def test_error_code(self):
        try:
            parse_chain_spec("[")
        except ParseError as exc:
            assert exc.code == "cli.ParseError"


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip(name, tmp_path):
    ch = load_fixture(name)
    path = tmp_path / "c.json"
    path.write_text(dump_chain_spec(ch))
    back = load_chain_spec(path)
    np.testing.assert_array_equal(back.rates, ch.rates)
    np.testing.assert_allclose(back.pi, ch.pi, atol=1e-15)
    np.testing.assert_array_equal(back.space.dist, ch.space.dist)
    assert json.loads(fixture_path(name).read_text())["states"] == list(ch.space.labels)
