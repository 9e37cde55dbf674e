from __future__ import annotations
from pathlib import Path
import re
from typing import Any
import click
from ..channel import JitterSpec
from ..clack import (
    ConfigurableCommand,
    JitterType,
    emit_records,
    run_options,
    simulation_errors,
)
from ..css import DEFAULT_PAD_FACTOR
from ..experiments import DEFAULT_SF_FOR_BW, run_fft_variation


class BandwidthSF(click.ParamType):
    name = "bw:sf"

    def convert(
        self, value: Any, param: click.Parameter | None, ctx: click.Context | None
    ) -> tuple[float, int]:
        if isinstance(value, tuple):
            return value
        m = re.fullmatch(r"\s*([^:\s]+)\s*:\s*(\d+)\s*", str(value))
        if m:
            try:
                return (float(m[1]), int(m[2]))
            except ValueError:
                pass
        self.fail(f"{value!r}: expected BW:SF", param, ctx)


@click.command(cls=ConfigurableCommand)
@click.option(
    "--bw",
    "bws",
    type=click.FloatRange(min=0, min_open=True),
    multiple=True,
    default=list(DEFAULT_SF_FOR_BW),
    show_default=True,
    help="Chirp bandwidth in Hz",
)
@click.option(
    "--sf-for-bw",
    "sf_for_bw",
    type=BandwidthSF(),
    multiple=True,
    help=(
        "Spreading factor to use at a bandwidth, as BW:SF  [default: 500000:9,"
        " 250000:8, 125000:7]"
    ),
)
@click.option(
    "--jitter",
    type=JitterType(),
    default="uniform:0:2e-06",
    show_default=True,
    help="Per-packet timing offset: fixed:S, uniform:LOW:HIGH or gaussian:SIGMA",
)
@click.option(
    "--freq-jitter",
    type=JitterType(),
    default="fixed:0.0",
    show_default=True,
    help="Per-packet frequency offset in Hz, in the same form as --jitter",
)
@click.option(
    "--n-packets",
    type=click.IntRange(min=1),
    default=1000,
    show_default=True,
    help="Packets per bandwidth",
)
@click.option(
    "--pad-factor",
    type=click.IntRange(min=1),
    default=DEFAULT_PAD_FACTOR,
    show_default=True,
    help="Zero-padding multiple of the receiver FFT",
)
@run_options
@click.pass_context
@simulation_errors
def cli(
    ctx: click.Context,
    bws: tuple[float, ...],
    sf_for_bw: tuple[tuple[float, int], ...],
    jitter: JitterSpec,
    freq_jitter: JitterSpec,
    n_packets: int,
    pad_factor: int,
    seed: int,
    output: Path | None,
    fmt: str | None,
    jobs: int,
) -> None:
    """Spread of FFT-bin displacements caused by hardware delays"""
    records = run_fft_variation(
        bw_list=bws,
        jitter=jitter,
        sf_for_bw={**DEFAULT_SF_FOR_BW, **dict(sf_for_bw)},
        freq_jitter=freq_jitter,
        n_packets=n_packets,
        pad_factor=pad_factor,
        seed=seed,
        jobs=jobs,
    )
    emit_records(records, ctx, seed, output, fmt)
