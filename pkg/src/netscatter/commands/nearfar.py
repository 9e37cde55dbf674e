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
from ..experiments import run_near_far


@click.command(cls=ConfigurableCommand)
@chirp_options
@click.option(
    "--bin-a", type=int, default=2, show_default=True, help="Weak device's bin"
)
@click.option(
    "--bin-b", type=int, default=258, show_default=True, help="Strong device's bin"
)
@click.option(
    "-P",
    "--power-diff",
    "power_diffs",
    type=click.FloatRange(min=0),
    multiple=True,
    default=[0.0, 10.0, 20.0, 30.0, 40.0],
    show_default=True,
    help="How much stronger the second device is received, in dB",
)
@click.option(
    "--freq-sigma",
    type=click.FloatRange(min=0),
    default=300.0,
    show_default=True,
    help="Standard deviation of each device's frequency offset, in Hz",
)
@click.option(
    "--n-symbols",
    type=click.IntRange(min=1),
    default=10_000,
    show_default=True,
    help="Payload symbols per power difference",
)
@click.option(
    "--snr",
    type=float,
    default=-5.0,
    show_default=True,
    help="SNR of the weak device, in dB",
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
    bin_a: int,
    bin_b: int,
    power_diffs: tuple[float, ...],
    freq_sigma: float,
    n_symbols: int,
    snr: float,
    seed: int,
    output: Path | None,
    fmt: str | None,
    jobs: int,
) -> None:
    """BER of a weak device next to an increasingly strong one"""
    records = run_near_far(
        chirp_config(sf, bw, pad_factor),
        bin_a=bin_a,
        bin_b=bin_b,
        power_diffs_db=power_diffs,
        freq_mismatch_sigma_hz=freq_sigma,
        n_symbols=n_symbols,
        snr_db=snr,
        skip=skip,
        seed=seed,
        jobs=jobs,
    )
    emit_records(records, ctx, seed, output, fmt)
