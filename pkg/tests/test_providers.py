import math
from random import Random

import numpy as np
import pytest

from picbreeder.cppn import ImageBuffer, to_png_bytes
from picbreeder.providers import (
    AuthError,
    BranchReply,
    ChatMessage,
    ConstantCaptioner,
    DownsampleImageEmbedder,
    HashTextEmbedder,
    HttpChatProvider,
    NetworkError,
    ParseError,
    PublishReply,
    RateLimitError,
    RatingsReply,
    ScriptedChatProvider,
    SelectReply,
    ToggleReply,
    ToneCaptioner,
    format_reply,
    one_sentence,
    parse_reply,
    stack_vectors,
)


def solid_png(level: float, size: int = 16) -> bytes:
    hsb = np.zeros((size, size, 3))
    hsb[:, :, 2] = level
    return to_png_bytes(ImageBuffer(size, size, hsb))


def test_chat_message_rejects_images_on_non_user():
    with pytest.raises(ValueError):
        ChatMessage("assistant", "hi", images=(b"png",))
    ChatMessage("user", "hi", images=(b"png",))


def test_parse_select_with_options():
    reply = parse_reply("SELECT 3,7 STRENGTH 0.4\nI like their symmetry.",
                        "select", 15)
    assert reply == SelectReply((3, 7), 0.4, None, "I like their symmetry.")
    reply = parse_reply("SELECT 0 MODE color", "select", 15)
    assert reply.mode == "color-only"


def test_parse_publish_with_title():
    reply = parse_reply('PUBLISH 14 TITLE "Sunset Gate"\nBold arcs.', "publish", 15)
    assert reply == PublishReply(14, "Sunset Gate", "Bold arcs.")


def test_parse_branch_and_fresh():
    assert parse_reply("BRANCH 12", "branch", 100) == BranchReply(12)
    assert parse_reply("BRANCH FRESH", "branch", 100) == BranchReply(None)


def test_parse_rate():
    reply = parse_reply("RATE 0=5,3=1, 7=3", "rate", 10)
    assert reply.scores == {0: 5, 3: 1, 7: 3}


def test_parse_rejects_out_of_range_and_malformed():
    with pytest.raises(ParseError):
        parse_reply("SELECT 99", "select", 15)
    with pytest.raises(ParseError):
        parse_reply("SELECT 1,1", "select", 15)
    with pytest.raises(ParseError):
        parse_reply("SELECT 1 STRENGTH 1.5", "select", 15)
    with pytest.raises(ParseError):
        parse_reply("RATE 0=9", "rate", 10)
    with pytest.raises(ParseError):
        parse_reply("just musings, no directive", "select", 15)
    with pytest.raises(ParseError):
        parse_reply("BRANCH 3", "select", 15)  # wrong stage
    with pytest.raises(ParseError):
        parse_reply('PUBLISH 1 TITLE ""', "publish", 15)


def test_parse_first_directive_wins_rest_is_rationale():
    text = "thinking about it\nSELECT 2\nbecause it is round\nSELECT 9"
    reply = parse_reply(text, "select", 15)
    assert reply.indices == (2,)
    assert "because it is round" in reply.rationale


def test_format_parse_round_trip_fuzz():
    rng = Random(8)
    stage_of = {BranchReply: "branch", SelectReply: "select",
                ToggleReply: "select", PublishReply: "publish",
                RatingsReply: "rate"}
    for _ in range(300):
        kind = rng.randrange(5)
        rationale = rng.choice(["", "a fine pick", "two\nlines of thought"])
        if kind == 0:
            reply = BranchReply(rng.choice([None, rng.randrange(100)]), rationale)
        elif kind == 1:
            n = rng.randrange(1, 4)
            indices = tuple(rng.sample(range(15), n))
            strength = rng.choice([None, round(rng.uniform(0.01, 1.0), 3)])
            mode = rng.choice([None, "structure-only", "color-only", "both"])
            reply = SelectReply(indices, strength, mode, rationale)
        elif kind == 2:
            reply = ToggleReply(rationale)
        elif kind == 3:
            reply = PublishReply(rng.randrange(15), "A Title", rationale)
        else:
            reply = RatingsReply({i: rng.randrange(1, 6)
                                  for i in rng.sample(range(100), 3)}, rationale)
        text = format_reply(reply)
        parsed = parse_reply(text, stage_of[type(reply)], 100)
        assert parsed == reply


def test_scripted_provider_replays_and_spies():
    provider = ScriptedChatProvider(["SELECT 3", RateLimitError("slow down")])
    messages = [ChatMessage("system", "sys"), ChatMessage("user", "pick")]
    assert provider.complete(messages) == "SELECT 3"
    assert provider.calls[0][1].text == "pick"
    with pytest.raises(RateLimitError):
        provider.complete(messages)
    with pytest.raises(NetworkError):
        provider.complete(messages)


def test_downsample_embedder_deterministic_and_hand_checkable():
    embedder = DownsampleImageEmbedder()
    black = embedder.embed_image(solid_png(0.0))
    white = embedder.embed_image(solid_png(1.0))
    again = embedder.embed_image(solid_png(1.0))
    assert white == again
    assert len(black.components) == 64
    # Hand computation: solid black downsamples to the zero vector, solid
    # white to all ones; cosine against a zero vector is 0 by convention.
    assert black.components == tuple([0.0] * 64)
    assert white.components == tuple([1.0] * 64)
    a, b = np.array(black.components), np.array(white.components)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    cosine = 0.0 if na == 0 or nb == 0 else float(a @ b / (na * nb))
    assert cosine == 0.0
    mid = embedder.embed_image(solid_png(0.5))
    m = np.array(mid.components)
    assert math.isclose(float(m @ b / (np.linalg.norm(m) * np.linalg.norm(b))), 1.0)


def test_hash_text_embedder_unit_and_deterministic():
    embedder = HashTextEmbedder()
    a = embedder.embed_text("fox")
    b = embedder.embed_text("fox")
    c = embedder.embed_text("owl")
    assert a == b
    assert a != c
    assert math.isclose(np.linalg.norm(a.as_array()), 1.0)


def test_stack_vectors_rejects_mixed_models():
    img = DownsampleImageEmbedder().embed_image(solid_png(0.5))
    txt = HashTextEmbedder().embed_text("x")
    with pytest.raises(ValueError):
        stack_vectors([img, txt])
    stacked = stack_vectors([img, img])
    assert stacked.shape == (2, 64)


def test_captioners_one_sentence():
    assert ConstantCaptioner().caption(solid_png(0.3)) == "gray image."
    assert one_sentence("First point. Second point.") == "First point."
    tone = ToneCaptioner()
    dark = tone.caption(solid_png(0.05))
    bright = tone.caption(solid_png(0.95))
    assert dark.endswith(".") and dark.count(".") == 1
    assert dark != bright
    assert tone.caption(solid_png(0.05)) == dark


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text

    def json(self):
        return self._payload


def test_http_chat_provider_builds_wire_shape_and_parses():
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen["url"] = url
        seen["json"] = json
        seen["headers"] = headers
        return FakeResponse(200, {"choices": [{"message": {"content": "SELECT 1"}}]})

    provider = HttpChatProvider("http://example/v1", api_key="k", model="m",
                                post=fake_post)
    text = provider.complete([
        ChatMessage("system", "sys"),
        ChatMessage("user", "look", images=(solid_png(0.5),)),
    ])
    assert text == "SELECT 1"
    assert seen["url"] == "http://example/v1/chat/completions"
    assert seen["headers"]["Authorization"] == "Bearer k"
    assert seen["json"]["model"] == "m"
    user = seen["json"]["messages"][1]
    assert user["content"][0] == {"type": "text", "text": "look"}
    assert user["content"][1]["image_url"]["url"].startswith("data:image/png;base64,")


@pytest.mark.parametrize("status,err", [
    (401, AuthError), (429, RateLimitError), (500, NetworkError),
])
def test_http_chat_provider_typed_errors(status, err):
    provider = HttpChatProvider(
        "http://example", post=lambda *a, **k: FakeResponse(status, text="nope"))
    with pytest.raises(err):
        provider.complete([ChatMessage("user", "hi")])


def test_http_chat_provider_timeout_is_network_error():
    def boom(*a, **k):
        raise TimeoutError("deadline")

    provider = HttpChatProvider("http://example", post=boom)
    with pytest.raises(NetworkError):
        provider.complete([ChatMessage("user", "hi")])
