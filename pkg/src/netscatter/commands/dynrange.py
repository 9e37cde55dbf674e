from __future__ import annotations
from pathlib import Path
import click
from ..clack import (
    ConfigurableCommand,
    chirp_config,
    chirp_options,
    emit_records,
    run_options,
    simulation_errors,
)
from ..experiments import run_dynamic_range_sweep


@click.command(cls=ConfigurableCommand)
@chirp_options
@click.option(
    "--fixed-bin",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="Bin of the stronger device",
)
@click.option(
    "-S",
    "--separation",
    "separations",
    type=click.IntRange(min=1),
    multiple=True,
    help=(
        "Bin separation of the weaker device  [default: doubling from SKIP to"
        " half the band and mirrored]"
    ),
)
@click.option(
    "--max-diff",
    type=click.FloatRange(min=0),
    default=50.0,
    show_default=True,
    help="Largest power difference searched, in dB",
)
@click.option(
    "--step",
    type=click.FloatRange(min=0, min_open=True),
    default=1.0,
    show_default=True,
    help="Resolution of the power difference search, in dB",
)
@click.option(
    "--n-packets",
    type=click.IntRange(min=1),
    default=100,
    show_default=True,
    help="Packets per tested power difference",
)
@click.option(
    "--snr",
    type=float,
    default=0.0,
    show_default=True,
    help="SNR of the weaker device, in dB",
)
@click.option(
    "--freq-sigma",
    type=click.FloatRange(min=0),
    default=300.0,
    show_default=True,
    help="Standard deviation of each device's frequency offset, in Hz",
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
    fixed_bin: int,
    separations: tuple[int, ...],
    max_diff: float,
    step: float,
    n_packets: int,
    snr: float,
    freq_sigma: float,
    seed: int,
    output: Path | None,
    fmt: str | None,
    jobs: int,
) -> None:
    """Largest tolerable power difference against bin separation"""
    records = run_dynamic_range_sweep(
        chirp_config(sf, bw, pad_factor),
        fixed_bin=fixed_bin,
        separations=separations or None,
        max_diff_db=max_diff,
        step_db=step,
        n_packets=n_packets,
        snr_db=snr,
        freq_mismatch_sigma_hz=freq_sigma,
        skip=skip,
        seed=seed,
        jobs=jobs,
    )
    emit_records(records, ctx, seed, output, fmt)
