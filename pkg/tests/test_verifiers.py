import json
import math

import httpx
import pytest

from binverify.errors import BackendError, ConfigurationError, InvalidInputError, UnparseableAnswerError
from binverify.raster import RasterImage
from binverify.verifiers import (
    ClaimQuery,
    HttpVerifier,
    McqQuery,
    ScriptedVerifier,
    SimulatedVerifier,
    SimulatorParams,
    Verdict,
    parse_mcq_choice,
    parse_verdict,
)


@pytest.mark.parametrize("raw, expected", [
    ("True", Verdict.TRUE),
    ("false", Verdict.FALSE),
    ("TRUE.", Verdict.TRUE),
    ("  False, the box shows a dog", Verdict.FALSE),
    ("The statement is true.", Verdict.TRUE),
    ("I think this is false", Verdict.FALSE),
    ("True or false? False.", Verdict.TRUE),  # first word decides
    ("It could be true or false", Verdict.UNPARSEABLE),
    ("Yes", Verdict.UNPARSEABLE),
    ("", Verdict.UNPARSEABLE),
    ("untrue", Verdict.UNPARSEABLE),
])
def test_parse_verdict(raw, expected):
    assert parse_verdict(raw) is expected


OPTS = ["red car", "blue car", "green bus"]


@pytest.mark.parametrize("raw, expected", [
    ("B", 1),
    ("(c)", 2),
    ("A.", 0),
    ("Answer: C", 2),
    ("The answer is (B).", 1),
    ("I pick (A) because it is red", 0),
    ("It is the green bus.", 2),
    ("**B**", 1),
])
def test_parse_mcq(raw, expected):
    assert parse_mcq_choice(raw, OPTS) == expected


@pytest.mark.parametrize("raw", ["A dog", "car", "Z", "(A) or (B)", ""])
def test_parse_mcq_unparseable(raw):
    with pytest.raises(UnparseableAnswerError) as info:
        parse_mcq_choice(raw, OPTS)
    assert info.value.raw == raw


def test_claim_prompt_and_validation():
    q = ClaimQuery("The cat is on the mat.")
    assert q.prompt == "The cat is on the mat."
    q = ClaimQuery("The cat is on the mat.", certainty_policy=True)
    assert q.prompt == "The cat is on the mat. Note: if uncertain, answer False"
    with pytest.raises(InvalidInputError):
        ClaimQuery("  ")


def test_mcq_prompt_layout():
    q = McqQuery("Pick one.", ("x", "y"))
    assert q.prompt == "Pick one.\nOptions:\n(A) x\n(B) y\nAnswer with the letter of the single best option."
    with pytest.raises(InvalidInputError):
        McqQuery("Pick", ())


class TestScripted:
    def test_lookup_by_key_then_prompt(self):
        v = ScriptedVerifier({"k1": True, "plain claim": "False"}, {"m": 1})
        assert v.verify(ClaimQuery("anything", key="k1"))[0] is Verdict.TRUE
        assert v.verify(ClaimQuery("plain claim"))[0] is Verdict.FALSE
        assert v.answer_mcq(McqQuery("s", ("a", "b"), key="m")) == (1, "B")
        assert v.calls == [("claim", "k1"), ("claim", None), ("mcq", "m")]

    def test_missing_fixture(self):
        with pytest.raises(ConfigurationError):
            ScriptedVerifier().verify(ClaimQuery("x", key="nope"))

    def test_bad_index(self):
        with pytest.raises(ConfigurationError):
            ScriptedVerifier(mcq={"m": 5}).answer_mcq(McqQuery("s", ("a", "b"), key="m"))


class TestSimulator:
    def test_rates_are_calibrated(self):
        n = 200_000
        sim = SimulatedVerifier(SimulatorParams(0.8, 0.3, 0.6, seed=1))
        for truth, rate in ((True, 0.8), (False, 0.3)):
            hits = sum(sim.verify(ClaimQuery("c", key=f"{truth}{i}", truth=truth))[0] is Verdict.TRUE
                       for i in range(n))
            assert abs(hits / n - rate) <= 3 * math.sqrt(rate * (1 - rate) / n)

    def test_mcq_accuracy_and_uniform_errors(self):
        n = 90_000
        sim = SimulatedVerifier(SimulatorParams(0.5, 0.5, 0.4, seed=2))
        counts = [0, 0, 0, 0]
        for i in range(n):
            counts[sim.answer_mcq(McqQuery("s", ("a", "b", "c", "d"), key=str(i), answer_index=2))[0]] += 1
        assert abs(counts[2] / n - 0.4) <= 3 * math.sqrt(0.24 / n)
        for j in (0, 1, 3):
            assert abs(counts[j] / n - 0.2) <= 3 * math.sqrt(0.16 / n)

    def test_seeded_and_order_independent(self):
        qs = [ClaimQuery("c", key=f"k{i}", truth=i % 2 == 0) for i in range(50)]
        a = SimulatedVerifier(SimulatorParams(0.6, 0.4, 0.5, seed=9))
        b = SimulatedVerifier(SimulatorParams(0.6, 0.4, 0.5, seed=9))
        fwd = [a.verify(q) for q in qs]
        rev = [b.verify(q) for q in reversed(qs)][::-1]
        assert fwd == rev
        c = SimulatedVerifier(SimulatorParams(0.6, 0.4, 0.5, seed=10))
        assert [c.verify(q) for q in qs] != fwd

    def test_repeats_are_independent_draws(self):
        sim = SimulatedVerifier(SimulatorParams(0.5, 0.5, 0.5, seed=0))
        draws = {sim.verify(ClaimQuery("c", key="same", truth=True, repeat=r))[0] for r in range(40)}
        assert draws == {Verdict.TRUE, Verdict.FALSE}

    def test_needs_truth(self):
        with pytest.raises(ConfigurationError):
            SimulatedVerifier(SimulatorParams(0.5, 0.5, 0.5)).verify(ClaimQuery("c"))

    def test_param_range(self):
        with pytest.raises(InvalidInputError):
            SimulatorParams(1.2, 0.1, 0.5)


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class TestHttp:
    def make(self, handler, tmp_path, **kw):
        client = httpx.Client(transport=httpx.MockTransport(handler))
        return HttpVerifier("https://example.test/v1/chat/completions", "test-model", client=client,
                            cache_dir=tmp_path / "cache", log_path=tmp_path / "log.jsonl", backoff=0, **kw)

    def test_request_shape_and_auth(self, tmp_path, monkeypatch):
        seen = []

        def handler(request):
            seen.append(request)
            return chat_reply("True")

        monkeypatch.setenv("TEST_KEY", "sekret")
        v = self.make(handler, tmp_path, api_key_env="TEST_KEY")
        verdict, raw = v.verify(ClaimQuery("Is it red?", images=(RasterImage.blank(4, 4),), key="k"))
        assert verdict is Verdict.TRUE and raw == "True"
        body = json.loads(seen[0].content)
        assert seen[0].headers["authorization"] == "Bearer sekret"
        assert body["model"] == "test-model" and body["temperature"] == 0.2
        content = body["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "Is it red?"}
        assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_cache_is_transparent(self, tmp_path):
        calls = []

        def handler(request):
            calls.append(1)
            return chat_reply("B")

        v = self.make(handler, tmp_path)
        q = McqQuery("Pick", ("x", "y"), key="m")
        first = v.answer_mcq(q)
        again = self.make(handler, tmp_path).answer_mcq(q)
        assert first == again == (1, "B") and len(calls) == 1
        # a different repeat index is a different request
        v.answer_mcq(McqQuery("Pick", ("x", "y"), key="m", repeat=1))
        assert len(calls) == 2
        log = [json.loads(line) for line in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert [e["cached"] for e in log] == [False, True, False]

    def test_retries_then_succeeds(self, tmp_path):
        replies = iter([httpx.Response(503), httpx.Response(200, json={"bad": 1}), chat_reply("False")])
        v = self.make(lambda r: next(replies), tmp_path, max_attempts=3)
        assert v.verify(ClaimQuery("c"))[0] is Verdict.FALSE
        assert v.network_calls == 3

    def test_exhausted_retries_raise(self, tmp_path):
        def handler(request):
            raise httpx.ConnectError("refused")

        v = self.make(handler, tmp_path, max_attempts=2)
        with pytest.raises(BackendError) as info:
            v.complete("hello")
        assert info.value.attempts == 2
        assert not list((tmp_path / "cache").rglob("*.json")) if (tmp_path / "cache").exists() else True
