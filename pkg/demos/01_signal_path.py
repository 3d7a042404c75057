"""Walk through the signal path: STFT, complex masking, resynthesis, mixing and the two metrics.

Run: python demos/01_signal_path.py
"""
import numpy as np

from avse_tongue.dsp import ComplexMask, StftConfig, Waveform, apply_complex_mask, istft, mix_at_snr, snr_db, stft
from avse_tongue.evaluation import segsnr, stoi

FS = 16000
rng = np.random.default_rng(0)

# A two-second "voiced" test signal: a gliding harmonic tone gated on and off a few times per second.
t = np.arange(2 * FS) / FS
phase = 2 * np.pi * np.cumsum(130 + 25 * np.sin(2 * np.pi * 0.5 * t)) / FS
clean = sum(np.sin(k * phase) / k for k in range(1, 10)) * np.clip(np.sin(2 * np.pi * 2.5 * t), 0, None)
clean = Waveform(0.3 * clean / np.abs(clean).max(), FS)

# 512-sample Hann window, hop 196, 257 frequency bins.
cfg = StftConfig()
spec = stft(clean, cfg)
print(f"STFT of {len(clean)} samples -> {spec.shape[0]} bins x {spec.shape[1]} frames "
      f"({spec.frame_rate:.1f} frames/s)")

# Weighted overlap-add recovers the signal away from the edges.
back = istft(spec, cfg, target_length=len(clean)).samples
inner = slice(cfg.window_length, len(clean) - cfg.window_length)
err = np.linalg.norm(back[inner] - clean.samples[inner]) / np.linalg.norm(clean.samples[inner])
print(f"round-trip relative error (interior): {err:.2e}")

# Mix with white noise at each training SNR and check the achieved ratio.
noise = Waveform(rng.standard_normal(FS), FS)
for target in (0.0, -5.0, -10.0):
    noisy = mix_at_snr(clean, noise, target, rng_seed=1)
    print(f"target {target:6.1f} dB  achieved {snr_db(clean.samples, noisy.samples):7.3f} dB")

# The ideal complex ratio mask, bounded to [-1, 1] the way the network output is.
noisy = mix_at_snr(clean, noise, -5.0, rng_seed=1)
ns = stft(noisy, cfg).to_complex()
cs = spec.to_complex()
ratio = cs / (ns + 1e-8)
mask = ComplexMask(np.tanh(ratio.real), np.tanh(ratio.imag))
enhanced = istft(apply_complex_mask(stft(noisy, cfg), mask), cfg, target_length=len(noisy))

print()
print(f"{'signal':<22} {'SegSNR':>8} {'STOI':>7}")
for name, x in (("noisy (-5 dB)", noisy), ("bounded ideal mask", enhanced), ("clean", clean)):
    print(f"{name:<22} {segsnr(clean, x):>8.3f} {stoi(clean, x):>7.4f}")
