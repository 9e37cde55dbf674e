from __future__ import annotations
from pathlib import Path
import click
from ..channel import JitterSpec
from ..clack import (
    ConfigurableCommand,
    JitterType,
    chirp_config,
    chirp_options,
    emit_records,
    run_options,
    simulation_errors,
)
from ..experiments import run_ber_snr


@click.command(cls=ConfigurableCommand)
@chirp_options
@click.option(
    "--snr",
    "snrs",
    type=float,
    multiple=True,
    default=[-10.0, -5.0, 0.0, 5.0, 10.0],
    show_default=True,
    help="SNR of every device, in dB",
)
@click.option(
    "-n",
    "--n-devices",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Number of concurrent devices",
)
@click.option(
    "--n-packets",
    type=click.IntRange(min=1),
    default=250,
    show_default=True,
    help="Packets per device and SNR",
)
@click.option(
    "--jitter",
    type=JitterType(),
    default="uniform:0:2e-06",
    show_default=True,
    help="Per-packet timing offset: fixed:S, uniform:LOW:HIGH or gaussian:SIGMA",
)
@run_options
@click.pass_context
@simulation_errors
def cli(
    ctx: click.Context,
    sf: int,
    bw: float,
    skip: int,
    pad_factor: int,
    snrs: tuple[float, ...],
    n_devices: int,
    n_packets: int,
    jitter: JitterSpec,
    seed: int,
    output: Path | None,
    fmt: str | None,
    jobs: int,
) -> None:
    """Per-device BER of equal-power devices against SNR"""
    records = run_ber_snr(
        chirp_config(sf, bw, pad_factor),
        snr_list=snrs,
        n_devices=n_devices,
        n_packets=n_packets,
        jitter=jitter,
        skip=skip,
        seed=seed,
        jobs=jobs,
    )
    emit_records(records, ctx, seed, output, fmt)
