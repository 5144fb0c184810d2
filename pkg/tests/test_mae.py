"""Masking semantics, the latent-masking pipeline, loss contract, training
smoke behavior and checkpoint fidelity."""

import numpy as np
import pytest
import torch
from scipy.stats import hypergeom

from famae.mae import (
    MaskSpec,
    mae_forward,
    mae_loss,
    reconstruction_targets,
    sample_mask,
    sinusoidal_positions,
)
from famae.checkpoint import load_checkpoint, save_checkpoint
from famae.pretraining import MaskedAutoencoderPretrainer
from famae.seeding import substream

from conftest import TINY_MODEL, npy, to_t


class TestSampleMask:
    def test_half_of_twenty_is_ten(self, rng):
        masked = sample_mask(20, MaskSpec(0.5), rng)
        assert len(masked) == 10
        assert len(np.unique(masked)) == 10

    def test_zero_ratio_empty(self, rng):
        assert len(sample_mask(20, MaskSpec(0.0), rng)) == 0

    def test_same_seed_same_draw(self):
        a = sample_mask(32, MaskSpec(0.5), substream(5, "mask"))
        b = sample_mask(32, MaskSpec(0.5), substream(5, "mask"))
        np.testing.assert_array_equal(a, b)

    def test_no_kept_tokens_rejected(self, rng):
        with pytest.raises(ValueError, match="kept"):
            sample_mask(1, MaskSpec(0.6), rng)

    def test_ratio_bounds(self):
        with pytest.raises(ValueError):
            MaskSpec(1.0)
        with pytest.raises(ValueError):
            MaskSpec(-0.1)

    def test_channel_overlap_is_hypergeometric(self):
        # Two channels drawing independently without replacement: the overlap
        # count follows Hypergeometric(n, m, m).
        n, m, draws = 16, 8, 10000
        rng = substream(11, "overlap")
        counts = np.zeros(m + 1)
        for _ in range(draws):
            a, b = (set(sample_mask(n, MaskSpec(0.5), r)) for r in rng.spawn(2))
            counts[len(a & b)] += 1
        pmf = hypergeom(n, m, m).pmf(np.arange(m + 1))
        tv_distance = 0.5 * np.abs(counts / draws - pmf).sum()
        assert tv_distance < 0.02


class TestMaeForward:
    def test_zero_ratio_is_pure_autoencoding(self, tiny_models, rng):
        fa, mae = tiny_models
        x = to_t(rng.standard_normal((2, 2, 20)))
        recon, masks = mae_forward(x, fa, mae, MaskSpec(0.0), substream(0, "m"))
        assert all(len(m) == 0 for m in masks)
        assert recon.shape == (2, 2, 4, 5)
        loss = mae_loss(recon, reconstruction_targets(x, 5), masks)
        assert loss.detach().item() == 0.0

    def test_second_encoder_and_decoder_token_counts(self, tiny_models, rng):
        fa, mae = tiny_models
        seen = {}
        orig_encode, orig_decode = mae.encode_visible, mae.decode

        def spy_encode(kept, idx, slots, record_attention=False):
            out = orig_encode(kept, idx, slots, record_attention)
            seen["enc"] = out.shape
            return out

        def spy_decode(visible, kept, masked, n, slots):
            out = orig_decode(visible, kept, masked, n, slots)
            seen["dec"] = out.shape
            return out

        mae.encode_visible, mae.decode = spy_encode, spy_decode
        try:
            x = to_t(rng.standard_normal((1, 2, 20)))  # N=4 per channel
            mae_forward(x, fa, mae, MaskSpec(0.5), substream(0, "m"))
        finally:
            mae.encode_visible, mae.decode = orig_encode, orig_decode
        assert seen["enc"] == (1, 4, fa.width)  # 2 kept per channel, 2 channels
        assert seen["dec"] == (1, 2, 4, fa.width)  # full 8-token grid

    def test_single_channel_matches_manual_pipeline(self, tiny_models, rng):
        fa, mae = tiny_models
        x = to_t(rng.standard_normal((2, 1, 20)))
        recon, masks = mae_forward(x, fa, mae, MaskSpec(0.5), substream(3, "m"))
        targets = reconstruction_targets(x, fa.patch_size)
        kept = np.setdiff1d(np.arange(4), masks[0])
        tokens = fa.forward_tokens(fa.embed(targets))
        want = mae([tokens[:, 0, kept]], [kept], list(masks), 4)
        np.testing.assert_array_equal(npy(recon), npy(want))

    def test_encoder_always_sees_full_sequences(self, tiny_models, rng):
        fa, mae = tiny_models
        shapes = []
        orig = fa.forward_tokens

        def spy(tokens):
            shapes.append(tuple(tokens.shape))
            return orig(tokens)

        fa.forward_tokens = spy
        try:
            x = rng.standard_normal((2, 3, 20))
            mae_forward(to_t(x), fa, mae, MaskSpec(0.5), substream(0, "m"))
            assert shapes == [(2, 3, 4, fa.width)]  # full N=4, every channel
            shapes.clear()
            mae_forward(to_t(x), fa, mae, MaskSpec(0.5), substream(0, "m"),
                        time_domain_masking=True)
            assert all(s[-2] == 2 for s in shapes)  # kept patches only
        finally:
            fa.forward_tokens = orig

    def test_embed_consumes_standardized_patches(self, tiny_models, rng):
        fa, mae = tiny_models
        seen = []
        orig = fa.embed.forward

        def spy(patches):
            seen.append(patches.detach().clone())
            return orig(patches)

        fa.embed.forward = spy
        try:
            x = rng.standard_normal((2, 2, 20))
            mae_forward(to_t(x), fa, mae, MaskSpec(0.5), substream(0, "m"))
        finally:
            del fa.embed.forward
        np.testing.assert_array_equal(
            npy(seen[0]), npy(reconstruction_targets(to_t(x), fa.patch_size))
        )

    def test_channel_count_exceeding_slots_rejected(self, tiny_models, rng):
        fa, mae = tiny_models
        x = to_t(rng.standard_normal((1, mae.max_channels + 1, 20)))
        with pytest.raises(ValueError, match="slots"):
            mae_forward(x, fa, mae, MaskSpec(0.5), substream(0, "m"))

    def test_masked_latent_tokens_never_feed_the_head(self, tiny_models, rng):
        # Gradients w.r.t. the latent grid vanish exactly at masked slots:
        # those tokens are replaced by the mask token, never consumed.
        fa, mae = tiny_models
        x = to_t(rng.standard_normal((1, 2, 20)))
        targets = reconstruction_targets(x, fa.patch_size)
        tokens = fa.forward_tokens(fa.embed(targets)).detach().requires_grad_(True)
        masks = [np.array([1, 3]), np.array([0, 2])]
        kept = [np.setdiff1d(np.arange(4), m) for m in masks]
        recon = mae([tokens[:, c, kept[c]] for c in range(2)], kept, masks, 4)
        mae_loss(recon, targets, masks).backward()
        grad = npy(tokens.grad)
        for c, m in enumerate(masks):
            assert np.all(grad[:, c, m] == 0.0)
            assert np.any(grad[:, c, kept[c]] != 0.0)

    def test_enc2_attention_rows_are_normalized(self, tiny_models, rng):
        fa, mae = tiny_models
        x = to_t(rng.standard_normal((2, 3, 20)))
        tokens = fa(torch.nn.functional.normalize(x, dim=-1))
        mae.mix_full(tokens, record_attention=True)
        assert mae.last_enc_attention
        for attn in mae.last_enc_attention:
            a = npy(attn)
            assert np.all(a >= 0)
            np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-9)

    def test_mix_full_channel_permutation_equivariance(self, tiny_models, rng):
        fa, mae = tiny_models
        tokens = to_t(rng.standard_normal((2, 3, 4, fa.width)))
        base = npy(mae.mix_full(tokens))
        perm = [2, 0, 1]
        permuted = npy(mae.mix_full(tokens[:, perm], slots=perm))
        np.testing.assert_allclose(permuted, base[:, perm], rtol=0, atol=1e-10)


class TestMaeLoss:
    def test_perfect_masked_reconstruction_is_zero(self, rng):
        targets = to_t(rng.standard_normal((2, 1, 4, 3)))
        recon = targets.clone()
        recon[:, 0, 0] += 99.0  # unmasked corruption
        loss = mae_loss(recon, targets, [np.array([1, 2])])
        assert loss.detach().item() == 0.0

    def test_hand_computed_single_patch(self):
        targets = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        recon = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        recon[0, 0, 1] = torch.tensor([1.0, 1.0])
        loss = mae_loss(recon, targets, [np.array([1])])
        assert loss.detach().item() == pytest.approx(1.0)

    def test_invariant_to_unmasked_corruption(self, tiny_models, rng):
        targets = to_t(rng.standard_normal((2, 2, 4, 3)))
        recon = to_t(rng.standard_normal((2, 2, 4, 3)))
        masks = [np.array([0, 3]), np.array([2])]
        base = mae_loss(recon, targets, masks).detach().item()
        corrupted = recon.clone()
        corrupted[:, 0, [1, 2]] = 1e6
        corrupted[:, 1, [0, 1, 3]] = -1e6
        assert mae_loss(corrupted, targets, masks).detach().item() == base

    def test_union_normalization(self, rng):
        # |union| = sum of per-channel masked counts.
        targets = torch.zeros(1, 2, 4, 2, dtype=torch.float64)
        recon = torch.ones(1, 2, 4, 2, dtype=torch.float64)
        loss = mae_loss(recon, targets, [np.array([0]), np.array([1, 2])])
        assert loss.detach().item() == pytest.approx(1.0)  # each token MSE is 1

    def test_empty_union_warns_and_is_zero(self, caplog):
        targets = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        with caplog.at_level("WARNING"):
            loss = mae_loss(targets.clone(), targets, [np.empty(0, dtype=np.int64)])
        assert loss.detach().item() == 0.0
        assert any("empty" in r.message for r in caplog.records)


class TestSinusoidalPositions:
    def test_shape_and_range(self):
        table = sinusoidal_positions(7, 16)
        assert table.shape == (7, 16)
        assert table.abs().max().item() <= 1.0

    def test_odd_widths_supported(self):
        assert sinusoidal_positions(4, 7).shape == (4, 7)

    def test_rows_distinct(self):
        table = npy(sinusoidal_positions(50, 16))
        for i in range(1, 50):
            assert not np.allclose(table[0], table[i])


def _tiny_pretrainer(seed=0, epochs=2, **kw):
    args = dict(
        depth=2, width=16, heads=4, patch_size=5, mlp_dim=32, dropout=0.0,
        enc2_depth=1, dec_depth=1, attn_heads=2, max_channels=4,
        mask_ratio=0.5, epochs=epochs, batch_size=8, lr=1e-3, seed=seed,
    )
    args.update(kw)
    return MaskedAutoencoderPretrainer(**args)


class TestPretraining:
    def test_smoke_single_epoch(self, rng):
        pre = _tiny_pretrainer(epochs=1).fit(rng.standard_normal((8, 2, 20)))
        assert len(pre.loss_curve_) == 1
        assert np.isfinite(pre.loss_curve_[0])

    def test_loss_mostly_non_increasing(self):
        # Structured signals, 20 epochs, 3 seeds: >= 90% of the epoch-to-epoch
        # deltas are non-increasing.
        t = np.arange(100) / 20.0
        total, good = 0, 0
        for seed in range(3):
            gen = substream(seed, "traindata")
            freqs = gen.choice([2.0, 4.0, 6.0, 8.0], size=(96, 2, 1))
            phases = gen.uniform(0, 2 * np.pi, size=(96, 2, 1))
            x = np.sin(2 * np.pi * freqs * t[None, None, :] + phases)
            x += 0.1 * gen.standard_normal(x.shape)
            pre = _tiny_pretrainer(
                seed=seed, epochs=20, lr=3e-4, width=32, mlp_dim=64, batch_size=16
            ).fit(x)
            deltas = np.diff(pre.loss_curve_)
            total += len(deltas)
            good += int((deltas <= 0).sum())
        assert good / total >= 0.9

    def test_adam_step_with_zero_grads_is_noop(self):
        p = torch.nn.Parameter(torch.tensor([1.0, -2.0], dtype=torch.float64))
        opt = torch.optim.Adam([p], lr=1e-3, betas=(0.9, 0.99))
        p.grad = torch.zeros_like(p)
        opt.step()
        np.testing.assert_array_equal(npy(p), [1.0, -2.0])

    def test_same_seed_bit_identical(self, rng):
        x = rng.standard_normal((8, 2, 20))
        a = _tiny_pretrainer(seed=9).fit(x)
        b = _tiny_pretrainer(seed=9).fit(x)
        assert a.loss_curve_ == b.loss_curve_
        for pa, pb in zip(a.encoder_.parameters(), b.encoder_.parameters()):
            np.testing.assert_array_equal(npy(pa), npy(pb))

    def test_divergence_aborts_with_diagnostic(self, rng):
        x = rng.standard_normal((8, 1, 20)) * 1e200  # overflow territory
        with pytest.raises(RuntimeError, match="non-finite"):
            _tiny_pretrainer(lr=1e300, epochs=2).fit(x)


class TestCheckpoint:
    def test_round_trip_outputs_identical(self, rng, tmp_path):
        x = rng.standard_normal((8, 2, 20))
        pre = _tiny_pretrainer(epochs=1).fit(x, channel_names=["a", "b"])
        path = tmp_path / "ckpt.famae"
        pre.save(path)
        loaded = MaskedAutoencoderPretrainer.from_checkpoint(path)
        assert loaded.channel_names_ == ["a", "b"]
        probe = to_t(rng.standard_normal(30))
        np.testing.assert_array_equal(
            npy(pre.encoder_(probe)), npy(loaded.encoder_(probe))
        )
        for (na, pa), (nb, pb) in zip(
            pre.mae_.named_parameters(), loaded.mae_.named_parameters()
        ):
            assert na == nb
            np.testing.assert_array_equal(npy(pa), npy(pb))

    def test_save_is_deterministic_bytes(self, rng, tmp_path):
        pre = _tiny_pretrainer(epochs=1).fit(rng.standard_normal((8, 1, 20)))
        pre.save(tmp_path / "a.famae")
        pre.save(tmp_path / "b.famae")
        assert (tmp_path / "a.famae").read_bytes() == (tmp_path / "b.famae").read_bytes()

    def test_truncated_params_detected(self, rng, tmp_path):
        import zipfile, json
        pre = _tiny_pretrainer(epochs=1).fit(rng.standard_normal((8, 1, 20)))
        path = tmp_path / "ckpt.famae"
        pre.save(path)
        with zipfile.ZipFile(path) as zf:
            header = zf.read("header.json")
            blob = zf.read("params.bin")
        bad = tmp_path / "bad.famae"
        with zipfile.ZipFile(bad, "w") as zf:
            zf.writestr("header.json", header)
            zf.writestr("params.bin", blob[:-8])
        with pytest.raises(Exception, match="truncated"):
            load_checkpoint(bad)
