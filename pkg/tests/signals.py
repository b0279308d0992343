""" Synthetic signals shared by the test modules. """
import numpy as np


def pluck(rate: int, seconds: float, f0: float = 196.0, seed: int = 0) -> np.ndarray:
    """ Guitar-like note: exponentially decaying harmonics with a little noise. """
    t = np.arange(int(rate * seconds)) / rate
    note = sum(np.sin(2 * np.pi * f0 * k * t) * np.exp(-t * (3.0 + k)) / k for k in range(1, 7))
    note += 0.01 * np.random.default_rng(seed).normal(size=t.shape)
    return (0.5 * note / np.max(np.abs(note))).astype(np.float32)


def spring_ir(rate: int, seconds: float = 0.3, seed: int = 0) -> np.ndarray:
    """ Decaying-noise impulse response with a direct path. """
    n = int(rate * seconds)
    ir = np.random.default_rng(seed).normal(size=n) * np.exp(-np.arange(n) / (0.08 * rate))
    ir[0] = 1.0
    return ir / np.sum(np.abs(ir)) * 4.0


def wet_of(dry: np.ndarray, rate: int, seed: int = 0) -> np.ndarray:
    wet = np.convolve(dry, spring_ir(rate, seed=seed))[:dry.shape[0]]
    return (0.9 * wet / max(np.max(np.abs(wet)), 1e-9)).astype(np.float32)


def sine(freq: float, rate: int, seconds: float, amplitude: float = 1.0) -> np.ndarray:
    t = np.arange(int(round(rate * seconds))) / rate
    return amplitude * np.sin(2 * np.pi * freq * t)
