"""JSON net documents: lossless rational encoding, f64 encoding, and
structural round trips including shared sub-nets."""

import json

import pytest
from gmpy2 import mpq

from nestnet import (
    ValidationError,
    deserialize_net,
    eval_scalar,
    floor_base,
    mid_net,
    net_eval,
    param_count,
    rat,
    serialize_net,
)
from nestnet.serialize import (
    document_to_net,
    load_net,
    net_to_document,
    net_to_f64,
    save_net,
)
from nestnet.train import build_experiment_nets


class TestRoundTrip:
    """deserialize(serialize(net)) is structurally equal and evaluates
    identically."""

    def test_rational_round_trip(self):
        net = mid_net()
        doc = serialize_net(net)
        back = deserialize_net(doc)
        assert back == net
        xs = (rat(1, 3), rat(-2), rat(7, 5))
        assert net_eval(back, xs) == net_eval(net, xs)

    def test_json_text_stable(self):
        net = floor_base(2, rat(1, 8))
        text = json.dumps(serialize_net(net), sort_keys=True)
        again = json.dumps(serialize_net(deserialize_net(json.loads(text))),
                           sort_keys=True)
        assert text == again

    def test_floor_survives_the_trip(self):
        net = deserialize_net(serialize_net(floor_base(2, rat(1, 8))))
        assert eval_scalar(net, rat(5, 2)) == 2

    def test_shared_subnet_round_trip(self):
        tnet = build_experiment_nets(4, "nested", seed=0)
        net = tnet.net
        back = deserialize_net(serialize_net(net))
        assert back == net
        assert param_count(back) == param_count(net)

    def test_f64_encoding(self):
        net = build_experiment_nets(3, "standard", seed=1).net
        doc = serialize_net(net)
        assert doc["encoding"] == "f64"
        back = deserialize_net(doc)
        assert net_eval(back, (0.25, -1.5)) == net_eval(net, (0.25, -1.5))

    def test_exact_net_to_f64_document(self):
        doc = serialize_net(mid_net(), encoding="f64")
        assert doc["encoding"] == "f64"
        back = deserialize_net(doc)
        assert net_eval(back, (1.0, 3.0, 2.0))[0] == 2.0

    def test_rational_document_from_float_net_rejected(self):
        net = build_experiment_nets(3, "standard", seed=1).net
        with pytest.raises(ValidationError):
            serialize_net(net, encoding="rational")


class TestDocumentValidation:
    """Malformed documents fail loudly instead of building bad nets."""

    def test_dangling_subnet_id(self):
        doc = serialize_net(build_experiment_nets(3, "nested", seed=0).net)
        ref = next(r for r in doc["nets"] if r != doc["root"])
        del doc["nets"][ref]
        with pytest.raises(ValidationError):
            document_to_net(doc)

    def test_unknown_activation_tag(self):
        doc = serialize_net(mid_net())
        doc["nets"][doc["root"]]["activations"][0][0] = "softplus"
        with pytest.raises(ValidationError):
            document_to_net(doc)

    def test_unknown_encoding(self):
        doc = serialize_net(mid_net())
        doc["encoding"] = "f32"
        with pytest.raises(ValidationError):
            document_to_net(doc)

    def test_wrong_format_tag(self):
        doc = serialize_net(mid_net())
        doc["format"] = "other/9"
        with pytest.raises(ValidationError):
            document_to_net(doc)


class TestFiles:
    """save/load to an actual path."""

    def test_save_load(self, tmp_path):
        net = floor_base(1, rat(1, 4))
        path = tmp_path / "net.json"
        save_net(net, path)
        assert load_net(path) == net


class TestFloatConversion:
    """Rounding an exact net to f64 keeps structure and sharing."""

    def test_net_to_f64(self):
        net = build_experiment_nets(3, "nested", seed=0).net
        exact_like = net_to_f64(net)  # already float: same values
        assert param_count(exact_like) == param_count(net)

    def test_exact_to_f64_values(self):
        f = net_to_f64(mid_net())
        assert net_eval(f, (1.0, 3.0, 2.0))[0] == 2.0
