"""Synchronized hypercube quantization codec.

The sensor-side encoder and the controller-side decoder each keep a copy of
the same state machine: the controller estimate xhat, a certified bound de
on ||x - xhat||_inf, and the growth law the bound follows between packets.
A transmission at t_k quantizes x(t_k) against the hypercube of radius
de(t_k-) centered on xhat(t_k-); the packet (p bits per axis) is applied by
both endpoints when it arrives at r_k = t_k + Delta_k.

Both endpoints run the identical reception update on identical inputs, so
their states remain bit-for-bit equal at every reception; equality is a
runtime certification invariant, not an approximation. The decoder never
needs the past: the pre-transmission center is recovered by flowing its own
estimate backward over the reception delay.

The error bound follows

    de(t) = ||e^{A (t - t_k)}||_inf delta_k + nu (e^{||A|| (t - t_k)} - 1)/||A||

between receptions, with delta_k the post-quantization bound at the send
time; the reference instant stays the send time t_k even while a packet is
in flight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import DesignConstants
from .errors import CertificationError, CodecError
from .mat_core import exp_rise, inf_norm, mat_exp

__all__ = [
    "Packet",
    "CodecState",
    "quantize",
    "dequantize",
    "de_flow",
    "packet_to_bytes",
    "packet_from_bytes",
    "states_match",
]

# Wire format: one byte for p, then ceil(n p / 8) big-endian index bytes.
_MAX_P_WIRE = 255
# Allowed relative overhang of |x - center| beyond de before quantization
# refuses (event localization can leave the state a rounding error outside).
_HULL_SLACK = 1e-9
# Encoder consistency check: reconstructed center vs the one it encoded with.
_CENTER_TOL = 1e-9


@dataclass(frozen=True)
class Packet:
    """One quantized state transmission.

    index packs the per-axis cell numbers with axis 0 most significant;
    t_send/t_receive are out-of-band timing metadata, not wire payload.
    """

    k: int
    t_send: float
    t_receive: float
    p: int
    index: int

    def __post_init__(self):
        if self.k < 1:
            raise CodecError("packet counter starts at 1")
        if self.p < 1:
            raise CodecError("p must be at least 1 bit per axis")
        if self.index < 0:
            raise CodecError("index must be nonnegative")
        if not self.t_receive >= self.t_send:
            raise CodecError("t_receive must not precede t_send")


def quantize(x, center, de: float, p: int) -> int:
    """Cell index of x in the 2^p-per-axis partition of the hypercube.

    The hypercube has center `center` and half-width de in every axis.
    The boundary face x_j = center_j + de belongs to the top cell.
    """
    if p < 1:
        raise CodecError("p must be at least 1 bit per axis")
    if not de > 0.0:
        raise CodecError("quantization needs a positive bound de")
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    diff = x - center
    if np.max(np.abs(diff)) > de * (1.0 + _HULL_SLACK):
        raise CertificationError(
            f"state outside the certified hypercube: |x - center| = "
            f"{np.max(np.abs(diff)):.6g} > de = {de:.6g}"
        )
    cells = 1 << p
    scaled = np.floor((diff + de) * (cells / (2.0 * de)))
    axes = np.clip(scaled, 0, cells - 1).astype(np.int64)
    index = 0
    for a in axes:  # axis 0 most significant
        index = (index << p) | int(a)
    return index


def dequantize(index: int, center, de: float, p: int, n: int) -> np.ndarray:
    """Centroid of the indexed cell; inverse companion of quantize."""
    if p < 1:
        raise CodecError("p must be at least 1 bit per axis")
    if not de > 0.0:
        raise CodecError("dequantization needs a positive bound de")
    cells = 1 << p
    if not 0 <= index < (1 << (n * p)):
        raise CodecError(f"index {index} out of range for n = {n}, p = {p}")
    center = np.asarray(center, dtype=float)
    axes = np.empty(n, dtype=np.int64)
    rest = index
    for j in range(n - 1, -1, -1):
        axes[j] = rest & (cells - 1)
        rest >>= p
    width = 2.0 * de / cells
    return center - de + (axes + 0.5) * width


def de_flow(delta: float, tau: float, consts: DesignConstants) -> float:
    """Certified error-bound growth over tau starting from a bound delta."""
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    growth = inf_norm(mat_exp(consts.plant.A, tau))
    return growth * delta + consts.nu * exp_rise(consts.norm_A2, tau)


def packet_to_bytes(packet: Packet, n: int) -> bytes:
    """Wire payload: one byte p, then the index big-endian in ceil(np/8) bytes."""
    if packet.p > _MAX_P_WIRE:
        raise CodecError(f"p = {packet.p} does not fit the one-byte header")
    nbytes = (n * packet.p + 7) // 8
    return bytes([packet.p]) + packet.index.to_bytes(nbytes, "big")


def packet_from_bytes(data: bytes, n: int) -> tuple[int, int]:
    """(p, index) from a wire payload produced by packet_to_bytes."""
    if len(data) < 1:
        raise CodecError("empty packet payload")
    p = data[0]
    if p < 1:
        raise CodecError("p must be at least 1 bit per axis")
    nbytes = (n * p + 7) // 8
    if len(data) != 1 + nbytes:
        raise CodecError(
            f"payload length {len(data)} does not match n = {n}, p = {p}"
        )
    index = int.from_bytes(data[1:], "big")
    if index >= 1 << (n * p):
        raise CodecError(f"index {index} out of range for n = {n}, p = {p}")
    return p, index


class CodecState:
    """One endpoint of the synchronized codec (encoder or decoder).

    State between receptions is the segment anchor: the estimate and time
    at the last reception (xhat_seg, t_seg) plus the error-bound law
    (ref_t, ref_delta). All flowed quantities are derived from the anchor
    with a single matrix exponential, so both endpoints perform the exact
    same float operations in the shared reception update.
    """

    def __init__(
        self,
        consts: DesignConstants,
        xhat0,
        de0: float,
        t0: float = 0.0,
        side: str = "encoder",
    ):
        if side not in ("encoder", "decoder"):
            raise CodecError("side must be 'encoder' or 'decoder'")
        if not de0 > 0.0:
            raise CodecError("initial bound de0 must be positive")
        xhat0 = np.asarray(xhat0, dtype=float).copy()
        if xhat0.shape != (consts.n,):
            raise CodecError(f"xhat0 must have shape ({consts.n},)")
        self.consts = consts
        self.side = side
        self.t_seg = float(t0)
        self.xhat_seg = xhat0
        self.ref_t = float(t0)
        self.ref_delta = float(de0)
        self.k = 0
        self.pending: Packet | None = None
        self._stash: tuple[np.ndarray, float] | None = None

    # ------------------------------------------------------------- queries

    def xhat_at(self, t: float) -> np.ndarray:
        """Controller estimate at t >= t_seg (autonomous flow, closed form)."""
        if t < self.t_seg:
            raise ValueError("cannot query the estimate before the segment start")
        return mat_exp(self.consts.plant.Abar, t - self.t_seg) @ self.xhat_seg

    def de_at(self, t: float) -> float:
        """Certified bound on ||x - xhat||_inf at t >= ref_t.

        While a packet is in flight the pre-transmission law still applies;
        the law switches only at reception.
        """
        return de_flow(self.ref_delta, t - self.ref_t, self.consts)

    # ------------------------------------------------------------ protocol

    def transmit(self, x, t_send: float, p: int, t_receive: float) -> Packet:
        """Encode x at t_send into a packet arriving at t_receive.

        Encoder side only. Does not mutate the segment state: the update
        happens at reception, identically on both endpoints.
        """
        if self.side != "encoder":
            raise CodecError("only the encoder can transmit")
        if self.pending is not None:
            raise CodecError("a packet is already in flight")
        if t_send < self.t_seg:
            raise CodecError("transmission before the current segment start")
        xhat_tk = mat_exp(self.consts.plant.Abar, t_send - self.t_seg) @ self.xhat_seg
        de_tk = de_flow(self.ref_delta, t_send - self.ref_t, self.consts)
        index = quantize(x, xhat_tk, de_tk, p)
        packet = Packet(
            k=self.k + 1, t_send=t_send, t_receive=t_receive, p=p, index=index
        )
        self.pending = packet
        self._stash = (xhat_tk, de_tk)
        return packet

    def receive(self, packet: Packet) -> None:
        """Apply a packet at its reception time (both endpoints).

        The update re-derives every flowed quantity from the segment anchor
        so that encoder and decoder, starting from bit-identical anchors,
        land on bit-identical post-reception states.
        """
        if packet.k != self.k + 1:
            raise CodecError(
                f"out-of-order packet: got k = {packet.k}, expected {self.k + 1}"
            )
        if self.side == "encoder":
            if self.pending is None:
                raise CodecError("no packet in flight")
            if packet != self.pending:
                raise CodecError("received packet does not match the one in flight")

        consts = self.consts
        flight = packet.t_receive - packet.t_send

        # quantization-time quantities, re-derived from the anchor
        xhat_tk = mat_exp(consts.plant.Abar, packet.t_send - self.t_seg) @ self.xhat_seg
        de_tk = de_flow(self.ref_delta, packet.t_send - self.ref_t, consts)
        delta_k = de_tk / 2.0**packet.p

        if flight == 0.0:
            z_k = xhat_tk
            xhat_new = dequantize(packet.index, z_k, de_tk, packet.p, consts.n)
        else:
            # decoder-visible reconstruction: backward flow from the running
            # estimate at reception time
            xhat_rk = mat_exp(consts.plant.Abar, flight) @ xhat_tk
            z_k = mat_exp(consts.plant.Abar, -flight) @ xhat_rk
            z_D = dequantize(packet.index, z_k, de_tk, packet.p, consts.n)
            E_A = mat_exp(consts.plant.A, flight)
            xhat_new = mat_exp(consts.plant.Abar, flight) @ z_k + E_A @ (z_D - z_k)

        if self.side == "encoder":
            # the backward-flowed center must reproduce the encoding center
            enc_center, enc_de = self._stash
            scale = max(1.0, float(np.max(np.abs(enc_center))))
            if np.max(np.abs(z_k - enc_center)) > _CENTER_TOL * scale or de_tk != enc_de:
                raise CertificationError(
                    "encoder/decoder desynchronized: reconstructed encoding "
                    "center drifted from the transmitted one"
                )
            self.pending = None
            self._stash = None

        # the bound law restarts from the send time at the quantized level;
        # evaluating it at t_receive reproduces the post-reception bound
        self.t_seg = packet.t_receive
        self.xhat_seg = xhat_new
        self.ref_t = packet.t_send
        self.ref_delta = delta_k
        self.k = packet.k

    # ----------------------------------------------------------- invariant


def states_match(a: CodecState, b: CodecState) -> bool:
    """Bit-for-bit equality of the synchronized portion of two endpoints."""
    return (
        a.t_seg == b.t_seg
        and a.ref_t == b.ref_t
        and a.ref_delta == b.ref_delta
        and a.k == b.k
        and np.array_equal(a.xhat_seg, b.xhat_seg)
    )
