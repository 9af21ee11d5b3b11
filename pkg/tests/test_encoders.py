import numpy as np
import pytest

from vcsr.encoders import (
    CLS_ID,
    PAD_ID,
    SEP_ID,
    FrameFeatures,
    FrameProjector,
    QuestionEncoder,
    QuestionTokens,
    encode_question,
    encode_question_with_candidate,
    pad_batch,
    project_frames,
    with_candidate,
)
from vcsr.numcore import Tensor, grad_check_tensors


@pytest.fixture
def encoder():
    return QuestionEncoder(vocab_size=20, d=32, max_len=12, heads=4, rng=np.random.default_rng(0))


def test_shapes_for_eight_tokens(encoder):
    enc = encode_question(QuestionTokens([CLS_ID, 5, 6, 7, 8, 9, 10, 11]), encoder)
    assert enc.q_g.shape == (32,)
    assert enc.q_l.shape == (7, 32)


def test_identical_sequences_encode_identically(encoder):
    a = encode_question(QuestionTokens([CLS_ID, 4, 9, 3]), encoder)
    b = encode_question(QuestionTokens([CLS_ID, 4, 9, 3]), encoder)
    assert np.array_equal(a.q_g.data, b.q_g.data)
    assert np.array_equal(a.q_l.data, b.q_l.data)


def test_swapping_tokens_changes_global_vector(encoder):
    a = encode_question(QuestionTokens([CLS_ID, 4, 9, 3]), encoder)
    b = encode_question(QuestionTokens([CLS_ID, 9, 4, 3]), encoder)
    assert not np.allclose(a.q_g.data, b.q_g.data)


@pytest.mark.parametrize("n", range(2, 13))
def test_local_rows_are_tokens_minus_one(encoder, n):
    ids = [CLS_ID] + [3 + (i % 15) for i in range(n - 1)]
    enc = encode_question(QuestionTokens(ids), encoder)
    assert enc.q_l.shape[0] == n - 1
    assert np.isfinite(enc.q_g.data).all() and np.isfinite(enc.q_l.data).all()


def test_unknown_token_rejected(encoder):
    with pytest.raises(ValueError):
        encode_question(QuestionTokens([CLS_ID, 25]), encoder)


def test_missing_cls_rejected(encoder):
    with pytest.raises(ValueError):
        encode_question(QuestionTokens([4, 5]), encoder)


def test_candidate_concatenation_layout():
    assert with_candidate([CLS_ID, 4, 5], [9]) == [CLS_ID, 4, 5, SEP_ID, 9]
    assert with_candidate([CLS_ID, 4], [CLS_ID, 9]) == [CLS_ID, 4, SEP_ID, 9]
    assert with_candidate([CLS_ID, 4], []) == [CLS_ID, 4, SEP_ID]


def test_empty_candidate_matches_question_plus_separator(encoder):
    q = QuestionTokens([CLS_ID, 4, 5])
    a = encode_question_with_candidate(q, [], encoder)
    b = encode_question(QuestionTokens([CLS_ID, 4, 5, SEP_ID]), encoder)
    assert np.array_equal(a.q_g.data, b.q_g.data)


def test_five_candidates_give_five_distinct_encodings(encoder):
    q = QuestionTokens([CLS_ID, 4, 5])
    encs = [encode_question_with_candidate(q, [10 + c], encoder) for c in range(5)]
    g = np.stack([e.q_g.data for e in encs])
    assert len({tuple(np.round(row, 12)) for row in g}) == 5
    again = encode_question_with_candidate(q, [10], encoder)
    assert np.array_equal(again.q_g.data, encs[0].q_g.data)


def test_candidate_overflow_rejected(encoder):
    q = QuestionTokens([CLS_ID] + [4] * 9)
    with pytest.raises(ValueError):
        encode_question_with_candidate(q, [5, 6, 7], encoder)


def test_padding_does_not_change_real_positions(encoder):
    ids = pad_batch([[CLS_ID, 4, 5], [CLS_ID, 4, 5, 6, 7]])
    assert ids[0, 3] == PAD_ID
    batched = encoder.encode_ids(ids)
    single = encode_question(QuestionTokens([CLS_ID, 4, 5]), encoder)
    assert np.allclose(batched.q_g.data[0], single.q_g.data, atol=1e-12)
    assert batched.mask[0].tolist() == [True, True, False, False]


def test_identity_projection_is_passthrough():
    rng = np.random.default_rng(1)
    proj = FrameProjector(16, 16, rng, identity=True)
    x = rng.normal(size=(10, 16))
    assert np.array_equal(project_frames(FrameFeatures(Tensor(x), "v"), proj).data, x)


def test_projection_shape_and_width_check():
    rng = np.random.default_rng(2)
    proj = FrameProjector(8, 32, rng)
    assert proj(Tensor(rng.normal(size=(64, 8)))).shape == (64, 32)
    with pytest.raises(ValueError):
        proj(Tensor(rng.normal(size=(64, 9))))


def test_projection_gradient():
    rng = np.random.default_rng(3)
    proj = FrameProjector(5, 4, rng)
    x = Tensor(rng.normal(size=(6, 5)))
    w = rng.normal(size=(6, 4))
    rep = grad_check_tensors(lambda: (proj(x) * Tensor(w)).sum() + (proj(x) ** 2).sum(),
                             list(proj.named_parameters()), tol=1e-5)
    assert rep.passed, rep.max_rel_err


def test_encoder_gradient_reaches_embeddings(encoder):
    ids = np.array([CLS_ID, 4, 5, 6])
    rep = grad_check_tensors(lambda: (encoder.encode_ids(ids).q_g ** 2).sum(),
                             [("embed", encoder.embed.weight), ("pos", encoder.pos)],
                             tol=1e-5, max_coords=40, rng=np.random.default_rng(0))
    assert rep.passed, rep.max_rel_err
