"""Network assembly, mask head, and checkpoint container tests."""

import json

import numpy as np
import pytest
import torch

from n2ndenoise.audio_io import Waveform
from n2ndenoise.checkpoint import load_tensors, save_tensors
from n2ndenoise.cxnn import ComplexTensor
from n2ndenoise.dcunet import (
    ArchitectureSpec,
    DCUnet,
    apply_mask,
    denoise,
    estimate_mask,
)
from n2ndenoise.spectral import StftConfig

from fd import fd_gradcheck

TINY = ArchitectureSpec(
    channels=(4, 6),
    kernels=((3, 3), (3, 3)),
    strides=((2, 1), (2, 2)),
    freq_rows=17,
    name="tiny",
)


def _rand_complex(shape, rng, dtype=torch.float64, grad=False):
    mk = lambda: torch.tensor(rng.standard_normal(shape), dtype=dtype, requires_grad=grad)
    return ComplexTensor(mk(), mk())


# ---------------------------------------------------------------- arch spec

def test_arch_rejects_mismatched_layer_lists():
    with pytest.raises(ValueError):
        ArchitectureSpec(
            channels=(4, 6), kernels=((3, 3),), strides=((1, 1), (1, 1)), freq_rows=17
        )


def test_arch_rejects_nonpositive_entries():
    with pytest.raises(ValueError):
        ArchitectureSpec(
            channels=(0,), kernels=((3, 3),), strides=((1, 1),), freq_rows=17
        )
    with pytest.raises(ValueError):
        ArchitectureSpec(
            channels=(4,), kernels=((3, 0),), strides=((1, 1),), freq_rows=17
        )


def test_arch_rejects_frequency_collapse():
    # even kernel with floor((k-1)/2) padding shrinks a 1-row axis to nothing
    with pytest.raises(ValueError, match="collapses"):
        ArchitectureSpec(
            channels=(4,), kernels=((4, 1),), strides=((1, 1),), freq_rows=1
        )
    with pytest.raises(ValueError, match="stage 1"):
        ArchitectureSpec(
            channels=(4, 4),
            kernels=((4, 1), (4, 1)),
            strides=((4, 1), (4, 1)),
            freq_rows=5,
        )


def test_arch_rejects_bad_slope():
    for slope in (1.0, -0.1):
        with pytest.raises(ValueError):
            ArchitectureSpec(
                channels=(4,), kernels=((3, 3),), strides=((1, 1),),
                freq_rows=17, leaky_slope=slope,
            )


def test_presets_load():
    desk = ArchitectureSpec.load_preset("desk10")
    assert desk.freq_rows == 257
    assert desk.n_layers == 5
    assert desk.channels[-1] == 64

    big = ArchitectureSpec.load_preset("dcunet20")
    assert big.freq_rows == 1537
    assert big.n_layers == 10

    with pytest.raises(ValueError, match="preset"):
        ArchitectureSpec.load_preset("nonexistent")


def test_arch_json_round_trip(tmp_path):
    path = tmp_path / "arch.json"
    path.write_text(json.dumps(TINY.to_dict()), encoding="utf-8")
    again = ArchitectureSpec.from_json_file(path)
    assert again == TINY


def test_min_time_steps():
    assert TINY.min_time_steps() == 1
    uneven = ArchitectureSpec(
        channels=(4, 4), kernels=((3, 4), (3, 3)), strides=((2, 2), (2, 1)),
        freq_rows=17,
    )
    assert uneven.min_time_steps() == 2


# ------------------------------------------------------------------ forward

def test_forward_shape_and_finiteness(rng):
    model = DCUnet(TINY, dtype=torch.float64, seed=0)
    x = _rand_complex((2, 1, 17, 12), rng)
    out = model.forward(x, training=True)
    assert tuple(out.real.shape) == (2, 1, 17, 12)
    assert torch.isfinite(out.real).all() and torch.isfinite(out.imag).all()


def test_forward_restores_dims_for_any_length(rng):
    # output padding is computed per call, so odd and even frame counts both
    # mirror back to the exact input dims
    model = DCUnet(TINY, dtype=torch.float64, seed=1)
    for t in range(1, 13):
        x = _rand_complex((1, 1, 17, t), rng)
        out = model.forward(x, training=False)
        assert tuple(out.real.shape) == (1, 1, 17, t), f"T={t}"


def test_forward_rejects_wrong_shapes(rng):
    model = DCUnet(TINY, dtype=torch.float64, seed=0)
    with pytest.raises(ValueError, match="frequency rows"):
        model.forward(_rand_complex((1, 1, 16, 8), rng))
    with pytest.raises(ValueError, match="B, 1, F, T"):
        model.forward(_rand_complex((1, 2, 17, 8), rng))
    with pytest.raises(ValueError, match="B, 1, F, T"):
        model.forward(_rand_complex((17, 8), rng))


def test_forward_rejects_too_few_frames(rng):
    arch = ArchitectureSpec(
        channels=(4, 4), kernels=((3, 4), (3, 3)), strides=((2, 2), (2, 1)),
        freq_rows=17,
    )
    model = DCUnet(arch, dtype=torch.float64, seed=0)
    with pytest.raises(ValueError, match="time axis too short"):
        model.forward(_rand_complex((1, 1, 17, 1), rng))
    out = model.forward(_rand_complex((1, 1, 17, 2), rng))
    assert tuple(out.real.shape) == (1, 1, 17, 2)


def test_forward_deterministic_given_seed(rng):
    a = DCUnet(TINY, dtype=torch.float64, seed=7)
    b = DCUnet(TINY, dtype=torch.float64, seed=7)
    x = _rand_complex((1, 1, 17, 9), rng)
    ya = a.forward(x, training=False)
    yb = b.forward(x, training=False)
    assert torch.equal(ya.real, yb.real) and torch.equal(ya.imag, yb.imag)
    c = DCUnet(TINY, dtype=torch.float64, seed=8)
    yc = c.forward(x, training=False)
    assert not torch.equal(ya.real, yc.real)


def test_parameter_names_follow_stage_layout():
    model = DCUnet(TINY, dtype=torch.float32, seed=0)
    names = set(model.named_parameters())
    assert "enc0.conv.w_real" in names
    assert "enc1.bn.gamma_ri" in names
    assert "dec0.tconv.w_imag" in names
    assert "dec0.bn.beta_re" in names
    # final decoder stage is a bare projection: no norm parameters
    assert not any(n.startswith("dec1.bn.") for n in names)
    bufs = set(model.named_buffers())
    assert "enc0.bn.running_vrr" in bufs
    assert not any(n.startswith("dec1.") for n in bufs)


def test_decoder_channel_arithmetic_desk10():
    model = DCUnet(ArchitectureSpec.load_preset("desk10"), dtype=torch.float32)
    got = [
        (t.w_real.shape[1], t.w_real.shape[0]) for t, _ in model.decoder
    ]
    assert got == [(64, 64), (128, 64), (128, 32), (64, 32), (64, 1)]


# --------------------------------------------------------------------- mask

def test_mask_magnitude_bounded(rng):
    o = _rand_complex((3, 1, 5, 7), rng)
    o = ComplexTensor(o.real * 50.0, o.imag * 50.0)
    m = estimate_mask(o)
    mag = m.magnitude()
    assert torch.all(mag <= 1.0)
    assert torch.all(torch.isfinite(mag))


def test_mask_magnitude_is_tanh_of_input_magnitude():
    # |O| = 0.5 at assorted phases -> |M| = tanh(0.5)
    phases = torch.linspace(-3.0, 3.0, 11, dtype=torch.float64)
    o = ComplexTensor(0.5 * torch.cos(phases), 0.5 * torch.sin(phases))
    mag = estimate_mask(o).magnitude()
    assert torch.allclose(
        mag, torch.full_like(mag, np.tanh(0.5)), atol=1e-9, rtol=0.0
    )


def test_mask_preserves_phase():
    o = ComplexTensor(
        torch.tensor([1.0, -2.0, 0.3], dtype=torch.float64),
        torch.tensor([0.5, 1.0, -0.7], dtype=torch.float64),
    )
    m = estimate_mask(o)
    assert torch.allclose(
        torch.atan2(m.imag, m.real), torch.atan2(o.imag, o.real), atol=1e-9
    )


def test_mask_zero_input_gives_zero_mask():
    o = ComplexTensor(torch.zeros(4, dtype=torch.float64), torch.zeros(4, dtype=torch.float64))
    m = estimate_mask(o)
    assert torch.equal(m.real, torch.zeros(4, dtype=torch.float64))
    assert torch.equal(m.imag, torch.zeros(4, dtype=torch.float64))


def test_mask_gradients_finite_at_zero_and_elsewhere(rng):
    o = _rand_complex((6,), rng, grad=True)
    with torch.no_grad():
        o.real[0] = 0.0
        o.imag[0] = 0.0
    m = estimate_mask(o)
    loss = (m.real.sum() + m.imag.sum())
    loss.backward()
    assert torch.isfinite(o.real.grad).all()
    assert torch.isfinite(o.imag.grad).all()


def test_mask_gradient_matches_central_differences(rng):
    o = _rand_complex((2, 3), rng, grad=True)
    w1 = torch.tensor(rng.standard_normal((2, 3)), dtype=torch.float64)
    w2 = torch.tensor(rng.standard_normal((2, 3)), dtype=torch.float64)

    def build_loss():
        m = estimate_mask(o)
        return (w1 * m.real).sum() + (w2 * m.imag).sum()

    fd_gradcheck(build_loss, {"o_re": o.real, "o_im": o.imag})


def test_apply_mask_matches_complex_product(rng):
    m = _rand_complex((2, 1, 4, 5), rng)
    x = _rand_complex((2, 1, 4, 5), rng)
    out = apply_mask(m, x)
    expect = (m.real.numpy() + 1j * m.imag.numpy()) * (
        x.real.numpy() + 1j * x.imag.numpy()
    )
    np.testing.assert_allclose(out.real.numpy(), expect.real, atol=1e-12)
    np.testing.assert_allclose(out.imag.numpy(), expect.imag, atol=1e-12)


def test_apply_mask_rejects_shape_mismatch(rng):
    with pytest.raises(ValueError):
        apply_mask(_rand_complex((1, 1, 4, 5), rng), _rand_complex((1, 1, 4, 6), rng))


def test_masking_never_amplifies_a_bin(rng):
    logits = _rand_complex((2, 1, 6, 8), rng)
    logits = ComplexTensor(logits.real * 10.0, logits.imag * 10.0)
    x = _rand_complex((2, 1, 6, 8), rng)
    masked = apply_mask(estimate_mask(logits), x)
    assert torch.all(masked.magnitude() <= x.magnitude() + 1e-12)


def test_forward_and_mask_gradients(rng):
    arch = ArchitectureSpec(
        channels=(3, 4), kernels=((3, 3), (3, 3)), strides=((2, 1), (2, 2)),
        freq_rows=9, name="fd",
    )
    model = DCUnet(arch, dtype=torch.float64, seed=3)
    x = _rand_complex((1, 1, 9, 6), rng)
    w1 = torch.tensor(rng.standard_normal((1, 1, 9, 6)), dtype=torch.float64)
    w2 = torch.tensor(rng.standard_normal((1, 1, 9, 6)), dtype=torch.float64)

    def build_loss():
        out = model.forward(x, training=True)
        masked = apply_mask(estimate_mask(out), x)
        return (w1 * masked.real).sum() + (w2 * masked.imag).sum()

    fd_gradcheck(build_loss, model.named_parameters(), max_checks=8)


# --------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    tensors = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal((2, 2, 2)),
        "c": np.array([1.5], dtype=np.float64),
    }
    meta = {"kind": "test", "step": 17}
    path = tmp_path / "ck.bin"
    save_tensors(path, tensors, meta)
    loaded, got_meta = load_tensors(path)
    assert got_meta == meta
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].dtype == tensors[name].dtype
        assert np.array_equal(loaded[name], tensors[name])


def test_checkpoint_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(ValueError, match="dtype"):
        save_tensors(tmp_path / "ck.bin", {"a": np.arange(3, dtype=np.int32)})


def test_checkpoint_truncated_blob_raises(tmp_path, rng):
    path = tmp_path / "ck.bin"
    save_tensors(path, {"a": rng.standard_normal(8)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ValueError, match="blob"):
        load_tensors(path)


def test_checkpoint_truncated_header_raises(tmp_path):
    path = tmp_path / "ck.bin"
    path.write_bytes(b"\x00" * 4)
    with pytest.raises(ValueError, match="too short"):
        load_tensors(path)
    import struct
    path.write_bytes(struct.pack("<Q", 1000) + b"{}")
    with pytest.raises(ValueError, match="truncated header"):
        load_tensors(path)


def test_checkpoint_corrupt_header_raises(tmp_path):
    import struct
    path = tmp_path / "ck.bin"
    junk = b"not json!!"
    path.write_bytes(struct.pack("<Q", len(junk)) + junk)
    with pytest.raises(ValueError, match="corrupt header"):
        load_tensors(path)


def test_model_state_survives_checkpoint(tmp_path, rng):
    path = tmp_path / "model.bin"
    a = DCUnet(TINY, dtype=torch.float32, seed=11)
    save_tensors(path, a.export_tensors(), {"arch": a.arch.to_dict()})

    tensors, meta = load_tensors(path)
    assert ArchitectureSpec.from_dict(meta["arch"]) == TINY
    b = DCUnet(ArchitectureSpec.from_dict(meta["arch"]), dtype=torch.float32, seed=99)
    b.load_tensors(tensors)

    x = _rand_complex((1, 1, 17, 8), rng, dtype=torch.float32)
    ya = a.forward(x, training=False)
    yb = b.forward(x, training=False)
    assert torch.equal(ya.real, yb.real) and torch.equal(ya.imag, yb.imag)


def test_load_tensors_validates_names_and_shapes(rng):
    model = DCUnet(TINY, dtype=torch.float32, seed=0)
    tensors = model.export_tensors()
    dropped = dict(tensors)
    dropped.pop("enc0.conv.w_real")
    with pytest.raises(ValueError, match="missing"):
        model.load_tensors(dropped)

    bad = dict(tensors)
    bad["enc0.conv.w_real"] = np.zeros((1, 1, 1, 1), dtype=np.float32)
    with pytest.raises(ValueError, match="shape"):
        model.load_tensors(bad)


# ------------------------------------------------------------------ denoise

def test_denoise_preserves_length_and_rate(rng):
    cfg = StftConfig(fft_size=32, hop=8)
    assert cfg.freq_rows == TINY.freq_rows
    model = DCUnet(TINY, dtype=torch.float64, seed=5)
    w = Waveform(0.1 * rng.standard_normal(400), 8000)
    out = denoise(w, model, cfg)
    assert len(out) == 400
    assert out.sample_rate == 8000
    assert np.isfinite(out.samples).all()
    again = denoise(w, model, cfg)
    assert np.array_equal(out.samples, again.samples)


def test_denoise_rejects_mismatched_transform(rng):
    model = DCUnet(TINY, dtype=torch.float64, seed=5)
    with pytest.raises(ValueError, match="rows"):
        denoise(Waveform(rng.standard_normal(200), 8000), model, StftConfig(64, 16))
